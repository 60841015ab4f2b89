use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{resolve, Cmp, Constraint, Corner, Instruction, ResolveError, TargetMode};
use crate::scene::{feasible_slots, Category, ObjectRole, Scene, DEFAULT_CLEARANCE};
use crate::seed;

/// Parameter draws per instruction before giving up.
const ATTEMPTS: u32 = 64;
/// Distinct templates per category; variants cycle through them.
pub const TEMPLATES_PER_CATEGORY: u32 = 5;

#[derive(Debug, Error)]
pub enum InstructError {
    #[error("scene is for category {scene}, instruction requested for {requested}")]
    CategoryMismatch { scene: Category, requested: Category },
    #[error("instruction variant must be >= 1")]
    InvalidVariant,
    #[error("no {category} instruction (variant {variant}) resolves on this scene")]
    UnsatisfiableOnScene { category: Category, variant: u32 },
    #[error(transparent)]
    Resolve(#[from] ResolveError),
}

fn ordinal(n: u32) -> String {
    let suffix = match (n % 10, n % 100) {
        (1, r) if r != 11 => "st",
        (2, r) if r != 12 => "nd",
        (3, r) if r != 13 => "rd",
        _ => "th",
    };
    format!("{n}{suffix}")
}

fn corner_phrase(c: Corner) -> &'static str {
    match c {
        Corner::LowerLeft => "lower-left",
        Corner::LowerRight => "lower-right",
        Corner::UpperLeft => "upper-left",
        Corner::UpperRight => "upper-right",
    }
}

/// Draw one candidate (text, constraint) for `category` template `t`.
fn draft(scene: &Scene, category: Category, t: u32, rng: &mut ChaCha8Rng) -> Option<(String, Constraint)> {
    let rows = scene.tray.rows;
    let cols = scene.tray.cols;
    let r = rng.random_range(1..=rows);
    let c = rng.random_range(1..=cols);
    let refs: Vec<&str> = scene
        .objects
        .iter()
        .filter(|o| o.role == ObjectRole::Reference)
        .map(|o| o.name.as_str())
        .collect();
    let dist = |name: &str, cmp| Constraint::Distance {
        reference: name.to_string(),
        cmp,
    };
    use Constraint as C;
    Some(match category {
        Category::Ordinal => {
            let k = C::Ordinal { row: r, col: c };
            let text = match t {
                0 => format!("Place the block in the slot at row {r}, column {c}, counting rows from the bottom and columns from the left."),
                1 => format!("Move the block into slot ({r}, {c}); rows count up from the bottom, columns from the left."),
                2 => format!("Put it in the {} slot from the left in the {} row from the bottom.", ordinal(c), ordinal(r)),
                3 => format!("Insert the block into row {r} (the bottom row is 1) and column {c} (the leftmost column is 1)."),
                _ => format!("Go to the {} row up from the bottom, then the {} column from the left, and place the block there.", ordinal(r), ordinal(c)),
            };
            (text, k)
        }
        Category::Size => match t {
            0 => ("Place the block into the largest compartment.".into(), C::Size(Cmp::Max)),
            1 => ("Put the block in the smallest slot on the tray.".into(), C::Size(Cmp::Min)),
            2 => ("Which slot has the biggest opening? Insert the block there.".into(), C::Size(Cmp::Max)),
            3 => ("Choose the tightest slot and place the block in it.".into(), C::Size(Cmp::Min)),
            _ => ("Place it in the roomiest slot.".into(), C::Size(Cmp::Max)),
        },
        Category::Height => match t {
            0 => ("Place the block in the highest slot.".into(), C::Height(Cmp::Max)),
            1 => ("Put the block into the lowest slot.".into(), C::Height(Cmp::Min)),
            2 => ("Insert the block into the slot whose rim sits tallest.".into(), C::Height(Cmp::Max)),
            3 => ("Pick the slot with the lowest rim and place the block there.".into(), C::Height(Cmp::Min)),
            _ => ("Place the block in the most elevated compartment.".into(), C::Height(Cmp::Max)),
        },
        Category::Distance => {
            let name = *refs.choose(rng)?;
            match t {
                0 => (format!("Place the block in the slot closest to the {name}."), dist(name, Cmp::Min)),
                1 => (format!("Put the block in the slot farthest from the {name}."), dist(name, Cmp::Max)),
                2 => (format!("Insert the block into the slot nearest the {name}."), dist(name, Cmp::Min)),
                3 => (format!("Place it as far from the {name} as the tray allows."), dist(name, Cmp::Max)),
                _ => (format!("Which slot is next to the {name}? Put the block there."), dist(name, Cmp::Min)),
            }
        }
        Category::Compositional => match t {
            0 => (
                format!("Place the block in the largest slot of row {r}, counting rows from the bottom."),
                C::And(vec![C::Row(r), C::Size(Cmp::Max)]),
            ),
            1 => (
                format!("In column {c} from the left, put the block in the lowest slot."),
                C::And(vec![C::Col(c), C::Height(Cmp::Min)]),
            ),
            2 => {
                let name = *refs.choose(rng)?;
                (
                    format!("Within row {r} from the bottom, choose the slot closest to the {name}."),
                    C::And(vec![C::Row(r), dist(name, Cmp::Min)]),
                )
            }
            3 => {
                let name = *refs.choose(rng)?;
                (
                    format!("In column {c} from the left, use the slot farthest from the {name}."),
                    C::And(vec![C::Col(c), dist(name, Cmp::Max)]),
                )
            }
            _ => (
                format!("Place the block in the smallest slot of column {c}, counting from the left."),
                C::And(vec![C::Col(c), C::Size(Cmp::Min)]),
            ),
        },
        Category::Negation => match t {
            0 => (
                "Place the block in a slot where it fits, but not in the lower-left cells.".into(),
                C::And(vec![C::not(C::Region(Corner::LowerLeft)), C::Feasible]),
            ),
            1 => (
                format!("Put the block in the largest slot it fits, but not in column {c}."),
                C::And(vec![C::not(C::Col(c)), C::Feasible, C::Size(Cmp::Max)]),
            ),
            2 => (
                format!("Leaving out row {r}, place the block in the smallest slot that still takes it."),
                C::And(vec![C::not(C::Row(r)), C::Feasible, C::Size(Cmp::Min)]),
            ),
            3 => {
                let corner = *Corner::ALL.choose(rng)?;
                (
                    format!("Stay out of the {} cells and use the biggest slot the block fits in.", corner_phrase(corner)),
                    C::And(vec![C::not(C::Region(corner)), C::Feasible, C::Size(Cmp::Max)]),
                )
            }
            _ => (
                format!("Not row {r}, not column {c}: put the block in the largest slot it fits."),
                C::And(vec![C::not(C::Row(r)), C::not(C::Col(c)), C::Feasible, C::Size(Cmp::Max)]),
            ),
        },
        Category::Vague => match t {
            0 => ("Put the block somewhere it fits.".into(), C::Feasible),
            1 => (
                format!("Find a spot for the block in row {r}, any slot that takes it."),
                C::And(vec![C::Feasible, C::Row(r)]),
            ),
            2 => (
                format!("Anywhere in column {c} is fine, as long as the block fits."),
                C::And(vec![C::Feasible, C::Col(c)]),
            ),
            3 => (
                "Anywhere away from the lower-left cells will do, if the block fits.".into(),
                C::And(vec![C::Feasible, C::not(C::Region(Corner::LowerLeft))]),
            ),
            _ => ("Just place the block in a sensible slot.".into(), C::Feasible),
        },
        Category::Affordance => {
            let text = match t {
                0 => "Place the block in the most stable compartment.",
                1 => "Put the block where it will stand upright without tipping.",
                2 => "Choose a slot deep enough to hold the tall block securely.",
                3 => "Insert the block into a slot that supports it well.",
                _ => "Which slot keeps the block steady? Place it there.",
            };
            (text.into(), C::Affordance)
        }
        Category::Knowledge => {
            let present: Vec<&str> = scene
                .knowledge
                .iter()
                .filter(|e| scene.object(&e.zone).is_some())
                .map(|e| e.item.as_str())
                .collect();
            let item = *present.choose(rng)?;
            let text = match t {
                0 => format!("This is a {item}. Put it in the slot next to where it belongs."),
                1 => format!("Store the {item} in the slot closest to its proper place."),
                2 => format!("Treat the block as a {item} and place it in the slot nearest the right container."),
                3 => format!("Where would a {item} go? Use the slot beside that spot."),
                _ => format!("Put the {item} in the slot nearest its storage area."),
            };
            (text, C::Knowledge(item.to_string()))
        }
    })
}

/// Generate the instruction for `category`, template variant `variant`
/// (1-based, cycling every five), on `scene`.
///
/// Parameters are redrawn until the constraint resolves to a non-empty set
/// of slots the pick target fits in, of exactly one slot for categories with
/// a unique target.
pub fn generate_instruction(
    scene: &Scene,
    category: Category,
    variant: u32,
    seed: u64,
) -> Result<Instruction, InstructError> {
    if scene.category != category {
        return Err(InstructError::CategoryMismatch {
            scene: scene.category,
            requested: category,
        });
    }
    if variant == 0 {
        return Err(InstructError::InvalidVariant);
    }
    let template = (variant - 1) % TEMPLATES_PER_CATEGORY;
    let feasible = feasible_slots(scene, scene.pick_target(), DEFAULT_CLEARANCE);
    for attempt in 0..ATTEMPTS {
        let mut rng = seed::rng(seed, &format!("instruction/{category}/{variant}/{attempt}"));
        let Some((text, constraint)) = draft(scene, category, template, &mut rng) else {
            continue;
        };
        debug_assert!(constraint.check().is_ok());
        let set = resolve(scene, &constraint)?;
        let size_ok = if category.unique_target() {
            set.len() == 1
        } else {
            !set.is_empty()
        };
        if size_ok && set.is_subset(&feasible) {
            return Ok(Instruction {
                text,
                constraint,
                category,
                target_mode: if category.unique_target() {
                    TargetMode::Unique
                } else {
                    TargetMode::AnyOfSet
                },
            });
        }
    }
    Err(InstructError::UnsatisfiableOnScene { category, variant })
}
