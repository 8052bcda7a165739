//! Synthetic world: a small taxonomy, color-coded object classes, rendered
//! scenes and question corpora.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::CorpusRecord;
use crate::image::Image;
use crate::proposal::Region;
use crate::qgen::tokenize;
use crate::taxonomy::Taxonomy;
use crate::error::Result;
use crate::uncertainty::{
    extract_features, predict, train_toy_classifier, ClassifierConfig, FeatureVector, SoftmaxDistribution,
    FEATURE_DIM, HUE_BINS, SAT_BINS, VAL_BINS,
};

/// Child → hypernym edges of the toy taxonomy (30 words, rooted at `entity`).
pub const TOY_EDGES: [(&str, &str); 32] = [
    ("organism", "entity"),
    ("artifact", "entity"),
    ("animal", "organism"),
    ("plant", "organism"),
    ("mammal", "animal"),
    ("bird", "animal"),
    ("pet", "animal"),
    ("canine", "mammal"),
    ("feline", "mammal"),
    ("dog", "canine"),
    ("dog", "pet"),
    ("cat", "feline"),
    ("cat", "pet"),
    ("bear", "mammal"),
    ("parrot", "bird"),
    ("parrot", "pet"),
    ("owl", "bird"),
    ("flower", "plant"),
    ("tulip", "flower"),
    ("rose", "flower"),
    ("tree", "plant"),
    ("vehicle", "artifact"),
    ("car", "vehicle"),
    ("bus", "vehicle"),
    ("bicycle", "vehicle"),
    ("boat", "vehicle"),
    ("toy", "artifact"),
    ("doll", "toy"),
    ("ball", "toy"),
    ("furniture", "artifact"),
    ("chair", "furniture"),
    ("table", "furniture"),
];

pub fn toy_taxonomy() -> Taxonomy {
    let edges: Vec<(String, String)> = TOY_EDGES
        .iter()
        .map(|(c, p)| (c.to_string(), p.to_string()))
        .collect();
    Taxonomy::from_edges(&edges, Some("entity")).expect("toy taxonomy is valid")
}

/// An object class drawn as a patch whose hue straddles the boundary
/// between two hue bins, so neighbouring classes share one bin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectClass {
    pub name: &'static str,
    pub hue: f64,
    pub known: bool,
}

pub const CLASSES: [ObjectClass; 8] = [
    ObjectClass { name: "dog", hue: 0.0, known: true },
    ObjectClass { name: "cat", hue: 45.0, known: false },
    ObjectClass { name: "bear", hue: 90.0, known: true },
    ObjectClass { name: "parrot", hue: 135.0, known: false },
    ObjectClass { name: "owl", hue: 180.0, known: true },
    ObjectClass { name: "tulip", hue: 225.0, known: false },
    ObjectClass { name: "rose", hue: 270.0, known: true },
    ObjectClass { name: "car", hue: 315.0, known: true },
];

pub fn known_classes() -> Vec<usize> {
    (0..CLASSES.len()).filter(|&i| CLASSES[i].known).collect()
}

pub fn unknown_classes() -> Vec<usize> {
    (0..CLASSES.len()).filter(|&i| !CLASSES[i].known).collect()
}

const OBJECT_SAT: f64 = 0.9;
const OBJECT_VAL: f64 = 0.9;
const PIXEL_HUE_SD: f64 = 8.0;
const OBJECT_HUE_SD: f64 = 3.0;
const BACKGROUND: f64 = 120.0;
const BACKGROUND_SD: f64 = 4.0;

pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let q = |u: f64| ((u + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [q(r), q(g), q(b)]
}

/// Paint `class` into `rect` with per-object and per-pixel hue jitter.
pub fn paint_object(image: &mut Image, rect: &Region, class: usize, rng: &mut impl Rng) {
    let base = CLASSES[class].hue + Normal::new(0.0, OBJECT_HUE_SD).unwrap().sample(rng);
    let pixel = Normal::new(0.0, PIXEL_HUE_SD).unwrap();
    for y in rect.y_tl..rect.y_br {
        for x in rect.x_tl..rect.x_br {
            let h = base + pixel.sample(rng);
            let s = OBJECT_SAT + rng.random_range(-0.03..0.03);
            let v = OBJECT_VAL + rng.random_range(-0.03..0.03);
            image.set_pixel(x, y, hsv_to_rgb(h, s, v));
        }
    }
}

fn background(width: u32, height: u32, rng: &mut impl Rng) -> Image {
    let noise = Normal::new(BACKGROUND, BACKGROUND_SD).unwrap();
    let mut img = Image::filled(width, height, [0, 0, 0]).expect("positive size");
    for y in 0..height {
        for x in 0..width {
            let g = noise.sample(rng).round().clamp(0.0, 255.0) as u8;
            img.set_pixel(x, y, [g, g, g]);
        }
    }
    img
}

/// Features of a freshly painted `size × size` patch of `class`.
pub fn object_features(class: usize, size: u32, rng: &mut impl Rng) -> FeatureVector {
    let mut img = Image::filled(size, size, [0, 0, 0]).expect("positive size");
    paint_object(&mut img, &Region::full(size, size), class, rng);
    extract_features(&img, None)
}

/// Labeled patch features of the known classes for classifier training.
pub fn classifier_training_set(per_class: usize, seed: u64) -> Vec<(FeatureVector, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for c in known_classes() {
        for _ in 0..per_class {
            let size = rng.random_range(16..28);
            out.push((object_features(c, size, &mut rng), CLASSES[c].name.to_string()));
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct SceneObject {
    pub class: usize,
    pub region: Region,
}

#[derive(Clone, Debug)]
pub struct Scene {
    pub id: String,
    pub image: Image,
    pub objects: Vec<SceneObject>,
}

pub const SCENE_SIZE: u32 = 96;

/// Two objects on a flat noisy background, in opposite quadrants.
pub fn two_object_scene(id: &str, first: usize, second: usize, rng: &mut impl Rng) -> Scene {
    let mut image = background(SCENE_SIZE, SCENE_SIZE, rng);
    let half = SCENE_SIZE / 2;
    let flip = rng.random_bool(0.5);
    let mut objects = Vec::new();
    for (slot, class) in [first, second].into_iter().enumerate() {
        let w = rng.random_range(18..26);
        let h = rng.random_range(18..26);
        let (qx, qy) = match (slot, flip) {
            (0, false) | (1, true) => (0, 0),
            _ => (half, half),
        };
        let x0 = qx + rng.random_range(4..half - w - 4);
        let y0 = qy + rng.random_range(4..half - h - 4);
        let region = Region::new(x0, y0, x0 + w, y0 + h);
        paint_object(&mut image, &region, class, rng);
        objects.push(SceneObject { class, region });
    }
    Scene {
        id: id.to_string(),
        image,
        objects,
    }
}

/// Scene `index` of a seeded series: one known and one unknown object.
pub fn mixed_scene(seed: u64, index: usize) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let known = known_classes();
    let unknown = unknown_classes();
    let k = known[rng.random_range(0..known.len())];
    let u = unknown[rng.random_range(0..unknown.len())];
    two_object_scene(&format!("scene-{seed}-{index}"), k, u, &mut rng)
}

/// Scene with two known objects.
pub fn known_scene(seed: u64, index: usize) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5151) ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let known = known_classes();
    let a = known[rng.random_range(0..known.len())];
    let b = known[rng.random_range(0..known.len())];
    two_object_scene(&format!("known-{seed}-{index}"), a, b, &mut rng)
}

const TEMPLATES: [&str; 5] = [
    "what is this {} ?",
    "what kind of {} is this ?",
    "what is the {} in the picture ?",
    "what type of {} is shown here ?",
    "what is the name of this {} ?",
];

/// The corpus question for a target word; a fixed function of the word.
pub fn question_for(word: &str) -> String {
    let h = word.bytes().fold(0u64, |acc, b| acc.wrapping_mul(31).wrapping_add(b as u64));
    TEMPLATES[(h % TEMPLATES.len() as u64) as usize].replace("{}", word)
}

/// Two corpus records per scene, one per object, each asking about a
/// different taxonomy word.
pub fn question_corpus(scenes: &[Scene], taxonomy: &Taxonomy, seed: u64) -> Vec<CorpusRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words = taxonomy.words();
    let mut out = Vec::new();
    for scene in scenes {
        let mut used: Vec<usize> = Vec::new();
        for obj in &scene.objects {
            let mut w = rng.random_range(0..words.len());
            while used.contains(&w) {
                w = rng.random_range(0..words.len());
            }
            used.push(w);
            out.push(CorpusRecord {
                image: scene.id.clone(),
                region: obj.region.coords(),
                target_word: words[w].clone(),
                question: question_for(&words[w]),
            });
        }
    }
    out
}

/// Samples from the Gaussian color-histogram class `class`: mass split
/// between the two hue bins around the class hue, plus small noise on
/// every bin.
pub fn gaussian_histograms(class: usize, n: usize, rng: &mut impl Rng) -> Vec<FeatureVector> {
    let split = Normal::<f64>::new(0.5, 0.15).unwrap();
    let floor = Normal::<f64>::new(0.0, 0.01).unwrap();
    let s_bin = ((OBJECT_SAT * SAT_BINS as f64) as usize).min(SAT_BINS - 1);
    let v_bin = ((OBJECT_VAL * VAL_BINS as f64) as usize).min(VAL_BINS - 1);
    let hi = (CLASSES[class].hue / 45.0).round() as usize % HUE_BINS;
    let lo = (hi + HUE_BINS - 1) % HUE_BINS;
    let idx = |h: usize| (h * SAT_BINS + s_bin) * VAL_BINS + v_bin;
    (0..n)
        .map(|_| {
            let mut v: Vec<f64> = (0..FEATURE_DIM).map(|_| floor.sample(rng).abs()).collect();
            let a = split.sample(rng).clamp(0.0, 1.0);
            v[idx(hi)] += a;
            v[idx(lo)] += 1.0 - a;
            let total: f64 = v.iter().sum();
            FeatureVector(v.into_iter().map(|x| x / total).collect())
        })
        .collect()
}

/// Open-set benchmark on Gaussian histograms: a classifier trained on
/// `per_class` draws of each known class scores fresh draws of every class.
/// Returns labeled known distributions and the unknown ones.
pub fn histogram_benchmark(
    per_class: usize,
    seed: u64,
) -> Result<(Vec<(SoftmaxDistribution, String)>, Vec<SoftmaxDistribution>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    for c in known_classes() {
        for f in gaussian_histograms(c, per_class, &mut rng) {
            train.push((f, CLASSES[c].name.to_string()));
        }
    }
    let model = train_toy_classifier(&train, &ClassifierConfig::default())?;
    let mut known = Vec::new();
    let mut unknown = Vec::new();
    for (c, class) in CLASSES.iter().enumerate() {
        for f in gaussian_histograms(c, per_class, &mut rng) {
            let d = predict(&model, &f)?;
            if class.known {
                known.push((d, class.name.to_string()));
            } else {
                unknown.push(d);
            }
        }
    }
    Ok((known, unknown))
}

/// Tokens of [`question_for`].
pub fn question_tokens(word: &str) -> Vec<String> {
    tokenize(&question_for(word))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uncertainty::hsv_bin;

    #[test]
    fn toy_taxonomy_shape() {
        let t = toy_taxonomy();
        assert_eq!(t.len(), 30);
        for c in CLASSES {
            assert!(t.contains(c.name));
        }
        assert_eq!(t.lowest_common_hypernym(&["dog", "bear"]).unwrap().word, "mammal");
        assert_eq!(t.lowest_common_hypernym(&["dog", "cat"]).unwrap().word, "mammal");
        assert_eq!(t.lowest_common_hypernym(&["bear", "owl"]).unwrap().word, "animal");
        assert_eq!(t.lowest_common_hypernym(&["owl", "rose"]).unwrap().word, "organism");
    }

    #[test]
    fn class_split() {
        assert_eq!(known_classes().len(), 5);
        assert_eq!(unknown_classes().len(), 3);
    }

    #[test]
    fn hsv_conversion() {
        assert_eq!(hsv_to_rgb(0.0, 1.0, 1.0), [255, 0, 0]);
        assert_eq!(hsv_to_rgb(120.0, 1.0, 1.0), [0, 255, 0]);
        assert_eq!(hsv_to_rgb(240.0, 1.0, 1.0), [0, 0, 255]);
        assert_eq!(hsv_to_rgb(77.0, 0.0, 0.5), [128, 128, 128]);
    }

    #[test]
    fn objects_straddle_two_hue_bins() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = object_features(2, 24, &mut rng);
        let [r, g, b] = hsv_to_rgb(80.0, 0.9, 0.9);
        let lo = hsv_bin([r, g, b]);
        let [r, g, b] = hsv_to_rgb(100.0, 0.9, 0.9);
        let hi = hsv_bin([r, g, b]);
        assert_ne!(lo, hi);
        assert!(f.0[lo] > 0.2 && f.0[hi] > 0.2, "{} {}", f.0[lo], f.0[hi]);
    }

    #[test]
    fn scenes_are_seeded_and_separated() {
        let a = mixed_scene(7, 3);
        let b = mixed_scene(7, 3);
        assert_eq!(a.image, b.image);
        assert_eq!(a.objects.len(), 2);
        assert!(CLASSES[a.objects[0].class].known);
        assert!(!CLASSES[a.objects[1].class].known);
        let (r0, r1) = (a.objects[0].region, a.objects[1].region);
        assert_eq!(crate::proposal::iou(&r0, &r1), 0.0);
        assert_ne!(mixed_scene(7, 4).image, a.image);
    }

    #[test]
    fn questions_depend_only_on_word() {
        assert_eq!(question_for("dog"), question_for("dog"));
        assert!(question_for("mammal").contains("mammal"));
        let scenes: Vec<Scene> = (0..5).map(|i| mixed_scene(1, i)).collect();
        let corpus = question_corpus(&scenes, &toy_taxonomy(), 3);
        assert_eq!(corpus.len(), 10);
        for pair in corpus.chunks(2) {
            assert_ne!(pair[0].target_word, pair[1].target_word);
        }
    }

    #[test]
    fn gaussian_histograms_are_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for v in gaussian_histograms(3, 10, &mut rng) {
            assert_eq!(v.len(), FEATURE_DIM);
            assert!((v.0.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(v.0.iter().all(|&x| x >= 0.0));
        }
    }
}
