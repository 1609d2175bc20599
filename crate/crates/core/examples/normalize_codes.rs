//! ICD normalization and the per-position character encoding the network reads.

use cptsuggest::codes::{CptCode, IcdCode};

fn main() {
    for raw in ["e11.9", " I10 ", "Z00.00", "M54.50", "E1.1.9", ""] {
        match IcdCode::normalize(raw) {
            Ok(icd) => println!("{raw:?} -> {} indices {:?}", icd.as_str(), icd.indices()),
            Err(e) => println!("{raw:?} rejected: {e}"),
        }
    }
    for raw in ["99213", "0001F", "9921"] {
        match CptCode::parse(raw) {
            Ok(cpt) => println!("cpt {}", cpt.as_str()),
            Err(e) => println!("cpt {raw:?} rejected: {e}"),
        }
    }
}
