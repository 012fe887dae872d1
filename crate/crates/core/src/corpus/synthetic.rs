//! Seeded generator of chest X-ray style reports for tests and benchmarks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Corpus;
use crate::types::Report;

const SIDES: &[&str] = &["right", "left", "bilateral"];
const ZONES: &[&str] = &["upper", "middle", "lower", "basilar", "perihilar", "apical", "retrocardiac", "peripheral"];
const SIZES: &[&str] = &["small", "moderate", "large", "trace", "tiny", "minimal", "extensive"];
const TRENDS: &[&str] = &["unchanged", "improved", "worsened", "new", "stable", "resolved", "slightly increased", "decreased"];
const STRUCTURES: &[&str] = &[
    "lung", "hemithorax", "costophrenic angle", "hilum", "hemidiaphragm", "lung base", "apex", "fissure",
    "lingula", "middle lobe", "lower lobe", "upper lobe", "mediastinum", "aortic knob", "trachea",
    "clavicle", "rib", "scapula", "axilla", "chest wall", "pleural space", "cardiophrenic angle",
];
const OPACITIES: &[&str] = &[
    "opacity", "consolidation", "atelectasis", "airspace disease", "infiltrate", "scarring", "nodule",
    "mass", "effusion", "pneumothorax", "thickening", "calcification", "granuloma", "bronchiectasis",
    "interstitial markings", "emphysematous change", "hyperinflation", "fracture", "lucency", "density",
];
const QUALIFIERS: &[&str] = &[
    "patchy", "streaky", "linear", "nodular", "hazy", "dense", "subtle", "ill-defined", "rounded",
    "wedge-shaped", "confluent", "focal", "diffuse", "mild", "chronic", "acute", "subsegmental",
];
const CAUSES: &[&str] = &[
    "pneumonia", "aspiration", "edema", "hemorrhage", "malignancy", "infection", "atelectasis",
    "scarring", "prior granulomatous disease", "fluid overload", "volume loss", "technique",
];
const DEVICES: &[&str] = &[
    "endotracheal tube",
    "nasogastric tube",
    "right internal jugular central venous catheter",
    "left PICC line",
    "right PICC line",
    "dual-lead pacemaker",
    "chest tube",
    "Swan-Ganz catheter",
    "tracheostomy tube",
    "feeding tube",
    "Impella device",
];
const DEVICE_POS: &[&str] = &[
    "terminates 4 cm above the carina",
    "courses below the diaphragm",
    "terminates in the mid SVC",
    "is in standard position",
    "tip projects over the cavoatrial junction",
    "has been withdrawn",
    "tip is in the stomach",
    "should be advanced",
];

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).expect("non-empty pool")
}

fn finding(rng: &mut ChaCha8Rng) -> String {
    match rng.gen_range(0..16) {
        0 => format!("There is a {} {} pleural effusion.", pick(rng, SIZES), pick(rng, SIDES)),
        1 => format!(
            "{} {} {} {} concerning for {}.",
            cap(pick(rng, QUALIFIERS)),
            pick(rng, SIDES),
            pick(rng, ZONES),
            pick(rng, OPACITIES),
            pick(rng, CAUSES)
        ),
        2 => format!("{} {} {}.", cap(pick(rng, SIZES)), pick(rng, ZONES), pick(rng, OPACITIES)),
        3 => format!("The cardiac silhouette is {}.", pick(rng, &["normal", "mildly enlarged", "enlarged", "top normal", "markedly enlarged"])),
        4 => format!("There is {} pulmonary vascular congestion.", pick(rng, &["mild", "moderate", "no", "severe", "minimal"])),
        5 => format!("The {} {}.", pick(rng, DEVICES), pick(rng, DEVICE_POS)),
        6 => format!("{} {} pneumothorax.", cap(pick(rng, SIZES)), pick(rng, SIDES)),
        7 => format!("No {}.", pick(rng, &["pneumothorax", "focal consolidation", "pleural effusion", "pulmonary edema", "acute osseous abnormality", "free air below the diaphragm"])),
        8 => format!(
            "{} in the {} {} may reflect {}.",
            cap(pick(rng, OPACITIES)),
            pick(rng, SIDES),
            pick(rng, STRUCTURES),
            pick(rng, CAUSES)
        ),
        9 => format!(
            "{} {} nodule measuring {} mm, {} since {}.",
            cap(pick(rng, SIDES)),
            pick(rng, ZONES),
            rng.gen_range(3..35),
            pick(rng, TRENDS),
            rng.gen_range(2009..2024)
        ),
        10 => format!("Mediastinal contours are {}.", pick(rng, &["normal", "widened", "within normal limits", "stable", "unremarkable"])),
        11 => format!("Degenerative changes of the {} spine.", pick(rng, &["thoracic", "lower thoracic", "cervical", "upper lumbar"])),
        12 => format!(
            "{} {} of the {} {}.",
            cap(pick(rng, QUALIFIERS)),
            pick(rng, OPACITIES),
            pick(rng, SIDES),
            pick(rng, STRUCTURES)
        ),
        13 => format!(
            "Compared to the study from {}/{}, the {} is {}.",
            rng.gen_range(1..13),
            rng.gen_range(1..29),
            pick(rng, OPACITIES),
            pick(rng, TRENDS)
        ),
        14 => format!(
            "{} the {} {}, likely {}.",
            pick(rng, &["Blunting of", "Elevation of", "Obscuration of", "Crowding at"]),
            pick(rng, SIDES),
            pick(rng, STRUCTURES),
            pick(rng, CAUSES)
        ),
        _ => format!(
            "Healed {} {} rib fracture{}.",
            pick(rng, SIDES),
            ["second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth"][rng.gen_range(0..8)],
            if rng.gen_bool(0.3) { "s" } else { "" }
        ),
    }
}

fn cap(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn report(rng: &mut ChaCha8Rng) -> String {
    let mut s = String::from(pick(rng, &["FINDINGS: ", "", "PA and lateral views of the chest. ", "Portable AP chest. "]));
    let k = rng.gen_range(3..8);
    let parts: Vec<String> = (0..k).map(|_| finding(rng)).collect();
    s.push_str(&parts.join(" "));
    if rng.gen_bool(0.6) {
        s.push_str(&format!(
            " IMPRESSION: {} compared to prior.",
            cap(pick(rng, TRENDS))
        ));
    }
    s
}

/// Edits a few sentences of `base` so near-duplicates exist in the corpus.
fn perturb(rng: &mut ChaCha8Rng, base: &str) -> String {
    let mut sentences: Vec<String> = base.split(". ").map(str::to_owned).collect();
    for _ in 0..rng.gen_range(1..3) {
        let i = rng.gen_range(0..sentences.len());
        match rng.gen_range(0..3) {
            0 => sentences[i] = finding(rng).trim_end_matches('.').to_owned(),
            1 if sentences.len() > 2 => {
                sentences.remove(i);
            }
            _ => sentences.insert(i, finding(rng).trim_end_matches('.').to_owned()),
        }
    }
    sentences.join(". ")
}

/// `n` reports with ids `s00000`, `s00001`, ... About a third are edited
/// copies of an earlier report.
pub fn synthetic_corpus(n: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut texts: Vec<String> = Vec::with_capacity(n);
    for _ in 0..n {
        let t = if !texts.is_empty() && rng.gen_bool(0.35) {
            let base = texts[rng.gen_range(0..texts.len())].clone();
            perturb(&mut rng, &base)
        } else {
            report(&mut rng)
        };
        texts.push(t);
    }
    Corpus::from_reports(
        texts
            .into_iter()
            .enumerate()
            .map(|(i, t)| Report::new(format!("s{i:05}"), t)),
    )
    .expect("generated ids are unique")
}
