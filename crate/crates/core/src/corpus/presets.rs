//! Canonical dataset protocols.
//!
//! The fixed novel lists ship for SNIPS and ATIS; the larger inventories use
//! seeded novel counts. ATIS presets carry the surface names of its novel
//! classes ('flight airfare', 'quantity', 'abbreviation', 'meal'); confirm
//! the raw-name mapping against your ATIS copy (corpora differ) and adjust
//! the config if needed.

use super::PartitionPolicy;

/// Per-dataset split and training defaults.
#[derive(Debug, Clone)]
pub struct DatasetPreset {
    pub id: &'static str,
    pub policy: PartitionPolicy,
    pub min_class_size: usize,
    pub default_epochs: usize,
}

/// Look up a preset by dataset id (case-insensitive; "nlued" aliases "nlue").
pub fn preset(id: &str) -> Option<DatasetPreset> {
    let id = id.to_lowercase();
    let preset = match id.as_str() {
        "snips" => DatasetPreset {
            id: "snips",
            policy: PartitionPolicy::FixedList(vec![
                "RateBook".into(),
                "AddToPlaylist".into(),
                "PlayMusic".into(),
            ]),
            min_class_size: 1,
            default_epochs: 3,
        },
        "atis" => DatasetPreset {
            id: "atis",
            policy: PartitionPolicy::FixedList(vec![
                "flight_airfare".into(),
                "quantity".into(),
                "abbreviation".into(),
                "meal".into(),
            ]),
            min_class_size: 10,
            default_epochs: 3,
        },
        "nlue" | "nlued" => DatasetPreset {
            id: "nlue",
            policy: PartitionPolicy::RandomCount(16),
            min_class_size: 1,
            default_epochs: 4,
        },
        "clinc150" => DatasetPreset {
            id: "clinc150",
            policy: PartitionPolicy::RandomCount(50),
            min_class_size: 1,
            default_epochs: 4,
        },
        "banking77" => DatasetPreset {
            id: "banking77",
            policy: PartitionPolicy::RandomCount(27),
            min_class_size: 1,
            default_epochs: 4,
        },
        "synthetic" => DatasetPreset {
            id: "synthetic",
            policy: PartitionPolicy::RandomCount(2),
            min_class_size: 1,
            default_epochs: 4,
        },
        _ => return None,
    };
    Some(preset)
}
