use std::collections::BTreeSet;

use slotgoal_core::instruct::{Cmp, Constraint, Corner};
use slotgoal_core::scene::{fits, Scene, SlotId, DEFAULT_CLEARANCE};

// Brute-force reference semantics: decide membership slot by slot, straight
// from the definitions, without sharing code with the library resolver.

#[derive(Debug, PartialEq)]
pub enum Unknown {
    Ref(String),
}

fn member(scene: &Scene, c: &Constraint, id: SlotId, scope: &[SlotId]) -> Result<bool, Unknown> {
    let slot = scene.tray.slots.iter().find(|s| s.row == id.row && s.col == id.col).unwrap();
    let (rows, cols) = (scene.tray.rows, scene.tray.cols);
    let pick = scene.objects.iter().find(|o| o.name == "block").unwrap();
    let feasible = |sid: SlotId| {
        let s = scene.tray.slots.iter().find(|s| s.row == sid.row && s.col == sid.col).unwrap();
        fits(pick.footprint, s.inner_extent, DEFAULT_CLEARANCE)
    };
    let best = |score: &dyn Fn(SlotId) -> f64, lower: bool| -> bool {
        if !scope.contains(&id) {
            return false;
        }
        let mine = score(id);
        scope.iter().all(|&o| if lower { score(o) >= mine } else { score(o) <= mine })
    };
    let slot_of = |sid: SlotId| scene.tray.slots.iter().find(|s| s.row == sid.row && s.col == sid.col).unwrap();
    let dist_to = |name: &str| -> Result<Box<dyn Fn(SlotId) -> f64 + '_>, Unknown> {
        let o = scene.objects.iter().find(|o| o.name == name).ok_or_else(|| Unknown::Ref(name.to_string()))?;
        let t = o.pose.translation();
        let (x, y, z) = (t.x, t.y, t.z);
        Ok(Box::new(move |sid| {
            let c = slot_of(sid).center;
            ((c.x - x).powi(2) + (c.y - y).powi(2) + (c.z - z).powi(2)).sqrt()
        }))
    };
    Ok(match c {
        Constraint::Ordinal { row, col } => slot.row == *row && slot.col == *col,
        Constraint::Row(r) => slot.row == *r,
        Constraint::Col(k) => slot.col == *k,
        Constraint::Region(corner) => {
            let r_ok = match corner {
                Corner::LowerLeft | Corner::LowerRight => slot.row <= 2,
                _ => slot.row >= rows.saturating_sub(1).max(1),
            };
            let c_ok = match corner {
                Corner::LowerLeft | Corner::UpperLeft => slot.col <= 2,
                _ => slot.col >= cols.saturating_sub(1).max(1),
            };
            r_ok && c_ok
        }
        Constraint::Feasible => feasible(id),
        Constraint::Affordance => feasible(id) && 2.0 * slot.depth >= pick.height,
        Constraint::Size(cmp) => {
            let area = |sid: SlotId| {
                let e = slot_of(sid).inner_extent;
                e[0] * e[1]
            };
            best(&area, *cmp == Cmp::Min)
        }
        Constraint::Height(cmp) => best(&|sid| slot_of(sid).rim_height, *cmp == Cmp::Min),
        Constraint::Distance { reference, cmp } => {
            let d = dist_to(reference)?;
            best(&*d, *cmp == Cmp::Min)
        }
        Constraint::Knowledge(key) => {
            let e = scene.knowledge.iter().find(|e| e.item == *key).ok_or_else(|| Unknown::Ref(key.clone()))?;
            let d = dist_to(&e.zone)?;
            best(&*d, true)
        }
        Constraint::Not(inner) => !member(scene, inner, id, &all(scene))?,
        Constraint::And(children) => {
            let everything = all(scene);
            let mut filtered = Vec::new();
            for &s in &everything {
                let mut ok = true;
                for ch in children.iter().filter(|ch| !ch.is_comparative()) {
                    ok &= member(scene, ch, s, &everything)?;
                }
                if ok {
                    filtered.push(s);
                }
            }
            let mut ok = filtered.contains(&id);
            for ch in children.iter().filter(|ch| ch.is_comparative()) {
                ok &= member(scene, ch, id, &filtered)?;
            }
            // evaluate comparatives on every slot too, so unknown references
            // surface regardless of filter outcome
            for ch in children.iter().filter(|ch| ch.is_comparative()) {
                member(scene, ch, id, &everything)?;
            }
            ok
        }
    })
}

fn all(scene: &Scene) -> Vec<SlotId> {
    scene.tray.slots.iter().map(|s| SlotId::new(s.row, s.col)).collect()
}

pub fn oracle(scene: &Scene, c: &Constraint) -> Result<BTreeSet<SlotId>, Unknown> {
    let everything = all(scene);
    let mut out = BTreeSet::new();
    for &id in &everything {
        if member(scene, c, id, &everything)? {
            out.insert(id);
        }
    }
    Ok(out)
}

