use serde::{Deserialize, Serialize};

const TABLE: &str = include_str!("../../data/knowledge.toml");

/// One row of the world-knowledge table: an item, its semantic attribute, and
/// the reference object where items with that attribute belong.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeEntry {
    pub item: String,
    pub attribute: String,
    pub zone: String,
}

#[derive(Deserialize)]
struct RawTable {
    zone: Vec<RawZone>,
    item: Vec<RawItem>,
}

#[derive(Deserialize)]
struct RawZone {
    attribute: String,
    object: String,
}

#[derive(Deserialize)]
struct RawItem {
    name: String,
    attribute: String,
}

/// The bundled knowledge table, in file order.
pub fn default_knowledge() -> Vec<KnowledgeEntry> {
    let raw: RawTable = toml::from_str(TABLE).expect("bundled knowledge table parses");
    raw.item
        .into_iter()
        .map(|it| {
            let zone = raw
                .zone
                .iter()
                .find(|z| z.attribute == it.attribute)
                .unwrap_or_else(|| panic!("no zone for attribute '{}'", it.attribute));
            KnowledgeEntry {
                item: it.name,
                attribute: it.attribute,
                zone: zone.object.clone(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_is_complete() {
        let t = default_knowledge();
        assert!(t.len() >= 10);
        let battery = t.iter().find(|e| e.item == "battery").unwrap();
        assert_eq!(battery.attribute, "hazardous");
        assert_eq!(battery.zone, "hazard bin");
        let mut items: Vec<_> = t.iter().map(|e| &e.item).collect();
        items.sort();
        items.dedup();
        assert_eq!(items.len(), t.len());
    }
}
