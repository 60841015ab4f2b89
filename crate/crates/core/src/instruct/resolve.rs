use thiserror::Error;

use super::{Cmp, Constraint};
use crate::scene::{feasible_slots, Scene, Slot, SlotSet, DEFAULT_CLEARANCE};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResolveError {
    #[error("unknown reference '{0}'")]
    UnknownReference(String),
}

/// Slots satisfying `c` on `scene`.
///
/// Filters (ordinal, row, col, region, feasible, affordance) select slots
/// independently of context. Comparatives (size, height, distance,
/// knowledge) pick the extreme slots of their scope: every slot at top
/// level, or inside `and`, the slots left by the non-comparative siblings.
/// Exact ties keep every tied slot. `not` complements against all slots.
pub fn resolve(scene: &Scene, c: &Constraint) -> Result<SlotSet, ResolveError> {
    eval(scene, c, &scene.tray.ids())
}

fn eval(scene: &Scene, c: &Constraint, scope: &SlotSet) -> Result<SlotSet, ResolveError> {
    let all = || scene.tray.ids();
    let filter = |pred: &dyn Fn(&Slot) -> bool| -> SlotSet {
        scene.tray.slots.iter().filter(|s| pred(s)).map(Slot::id).collect()
    };
    let (rows, cols) = (scene.tray.rows, scene.tray.cols);
    Ok(match c {
        Constraint::Ordinal { row, col } => filter(&|s| s.row == *row && s.col == *col),
        Constraint::Row(r) => filter(&|s| s.row == *r),
        Constraint::Col(k) => filter(&|s| s.col == *k),
        Constraint::Region(corner) => filter(&|s| corner.contains(s.row, s.col, rows, cols)),
        Constraint::Feasible => feasible_slots(scene, scene.pick_target(), DEFAULT_CLEARANCE),
        Constraint::Affordance => {
            let obj = scene.pick_target();
            let ok = feasible_slots(scene, obj, DEFAULT_CLEARANCE);
            filter(&|s| ok.contains(&s.id()) && s.depth >= obj.height / 2.0)
        }
        Constraint::Size(cmp) => extreme(scene, scope, *cmp, |s| s.area()),
        Constraint::Height(cmp) => extreme(scene, scope, *cmp, |s| s.rim_height),
        Constraint::Distance { reference, cmp } => {
            let p = scene
                .object(reference)
                .ok_or_else(|| ResolveError::UnknownReference(reference.clone()))?
                .position();
            extreme(scene, scope, *cmp, |s| s.center.distance(&p))
        }
        Constraint::Knowledge(key) => {
            let entry = scene
                .knowledge
                .iter()
                .find(|e| e.item == *key)
                .ok_or_else(|| ResolveError::UnknownReference(key.clone()))?;
            let p = scene
                .object(&entry.zone)
                .ok_or_else(|| ResolveError::UnknownReference(entry.zone.clone()))?
                .position();
            extreme(scene, scope, Cmp::Min, |s| s.center.distance(&p))
        }
        Constraint::Not(inner) => {
            let excluded = eval(scene, inner, &all())?;
            all().difference(&excluded).copied().collect()
        }
        Constraint::And(children) => {
            let mut base = all();
            for ch in children.iter().filter(|ch| !ch.is_comparative()) {
                let s = eval(scene, ch, &all())?;
                base = base.intersection(&s).copied().collect();
            }
            let mut out = base.clone();
            for ch in children.iter().filter(|ch| ch.is_comparative()) {
                let s = eval(scene, ch, &base)?;
                out = out.intersection(&s).copied().collect();
            }
            out
        }
    })
}

fn extreme(scene: &Scene, scope: &SlotSet, cmp: Cmp, key: impl Fn(&Slot) -> f64) -> SlotSet {
    let scored: Vec<(f64, &Slot)> = scene
        .tray
        .slots
        .iter()
        .filter(|s| scope.contains(&s.id()))
        .map(|s| (key(s), s))
        .collect();
    let best = scored.iter().map(|(v, _)| *v).fold(None, |acc: Option<f64>, v| {
        Some(match (acc, cmp) {
            (None, _) => v,
            (Some(a), Cmp::Min) => a.min(v),
            (Some(a), Cmp::Max) => a.max(v),
        })
    });
    match best {
        None => SlotSet::new(),
        Some(b) => scored.iter().filter(|(v, _)| *v == b).map(|(_, s)| s.id()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instruct::{parse_constraint, Corner};
    use crate::scene::{generate_scene, Category, SlotId};

    fn run(scene: &Scene, src: &str) -> SlotSet {
        resolve(scene, &parse_constraint(src).unwrap()).unwrap()
    }

    #[test]
    fn ordinal_picks_one_slot() {
        let sc = generate_scene(Category::Ordinal, 1, 3).unwrap();
        assert_eq!(run(&sc, "(ordinal 2 3)"), [SlotId::new(2, 3)].into());
        assert!(run(&sc, "(ordinal 9 9)").is_empty());
    }

    #[test]
    fn largest_slot_is_unique_on_size_scene() {
        let sc = generate_scene(Category::Size, 1, 0).unwrap();
        let got = run(&sc, "(size max)");
        assert_eq!(got.len(), 1);
        let id = *got.iter().next().unwrap();
        let a = sc.slot(id).unwrap().area();
        assert!(sc.tray.slots.iter().all(|s| s.area() <= a));
    }

    #[test]
    fn comparative_is_scoped_inside_and() {
        let sc = generate_scene(Category::Compositional, 2, 5).unwrap();
        let got = run(&sc, "(and (row 1) (size max))");
        assert_eq!(got.len(), 1);
        let id = *got.iter().next().unwrap();
        assert_eq!(id.row, 1);
        let a = sc.slot(id).unwrap().area();
        assert!(sc.tray.slots.iter().filter(|s| s.row == 1).all(|s| s.area() <= a));
    }

    #[test]
    fn negation_complements() {
        let sc = generate_scene(Category::Negation, 1, 1).unwrap();
        let ll = resolve(&sc, &Constraint::Region(Corner::LowerLeft)).unwrap();
        let not_ll = run(&sc, "(not (region lower-left))");
        assert_eq!(ll.len() + not_ll.len(), sc.tray.slots.len());
        assert!(ll.is_disjoint(&not_ll));
        assert_eq!(run(&sc, "(and (not (region lower-left)) (feasible))").len(), 1);
    }

    #[test]
    fn unknown_reference() {
        let sc = generate_scene(Category::Ordinal, 1, 0).unwrap();
        let e = resolve(&sc, &parse_constraint("(distance unicorn min)").unwrap()).unwrap_err();
        assert_eq!(e, ResolveError::UnknownReference("unicorn".into()));
        assert!(resolve(&sc, &parse_constraint("(knowledge \"moon rock\")").unwrap()).is_err());
    }

    #[test]
    fn ties_keep_all() {
        // all slots share one rim height on ordinal scenes
        let sc = generate_scene(Category::Ordinal, 1, 0).unwrap();
        let h = sc.tray.slots[0].rim_height;
        if sc.tray.slots.iter().all(|s| s.rim_height == h) {
            assert_eq!(run(&sc, "(height max)").len(), sc.tray.slots.len());
        }
    }
}
