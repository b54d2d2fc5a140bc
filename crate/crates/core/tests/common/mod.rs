#![allow(dead_code)]

use pine::model::Dims;
use pine::trainer::train_step;
use pine::{ContextSlot, Matrix, ModelKind, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const KINDS: [ModelKind; 3] = [
    ModelKind::Subword,
    ModelKind::Positional,
    ModelKind::Constrained { positional_dim: 3 },
];

/// Central difference step.
pub const FD_STEP: f64 = 1e-5;
/// Gradients below this magnitude are compared absolutely.
pub const FD_FLOOR: f64 = 1e-6;

fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Matrix::from_vec(rows, cols, data)
}

/// A random tiny model with V=20, B=50, D=8, c=2.
pub fn tiny_model(kind: ModelKind, seed: u64) -> ModelParams<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = Dims {
        vocab_size: 20,
        buckets: 50,
        dim: 8,
        window: 2,
    };
    let dp = kind.positional_dim(dims.dim);
    let input = random_matrix(70, 8, 0.5, &mut rng);
    let output = random_matrix(20, 8, 0.5, &mut rng);
    let positional = kind
        .is_positional()
        .then(|| random_matrix(4, dp, 1.5, &mut rng));
    ModelParams::from_parts(kind, dims.window, input, output, positional).unwrap()
}

/// Rows for a full window of four words. Some rows are shared between
/// words to exercise accumulated updates.
pub fn tiny_window(rng: &mut ChaCha8Rng) -> Vec<(i32, Vec<u32>)> {
    let shared = 20 + rng.random_range(0..50u32);
    [-2, -1, 1, 2]
        .iter()
        .map(|&p| {
            let mut rows = vec![rng.random_range(0..20u32)];
            rows.extend((0..3).map(|_| 20 + rng.random_range(0..50u32)));
            if rng.random::<bool>() {
                rows.push(shared);
            }
            (p, rows)
        })
        .collect()
}

fn slots(window: &[(i32, Vec<u32>)]) -> Vec<ContextSlot<'_>> {
    window
        .iter()
        .map(|(p, rows)| ContextSlot {
            position: *p,
            rows,
        })
        .collect()
}

fn all_params(p: &mut ModelParams<f64>) -> Vec<&mut [f64]> {
    let mut out = vec![p.input.as_mut_slice(), p.output.as_mut_slice()];
    if let Some(d) = p.positional.as_mut() {
        out.push(d.as_mut_slice());
    }
    out
}

/// Largest relative error between the SGD update direction of one step and
/// central finite differences of the loss, over every parameter.
pub fn max_gradient_error(kind: ModelKind, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let params = tiny_model(kind, seed);
    let window = tiny_window(&mut rng);
    let target = rng.random_range(0..20u32);
    // negatives are drawn with replacement, as in training
    let mut negatives = Vec::new();
    while negatives.len() < 3 {
        let n = rng.random_range(0..20u32);
        if n != target {
            negatives.push(n);
        }
    }

    // with lr = 1 the parameter change is exactly minus the gradient
    let mut stepped = params.clone();
    train_step(&mut stepped, &slots(&window), target, &negatives, 1.0).unwrap();
    let mut before = params.clone();
    let mut after = stepped;
    let analytic: Vec<f64> = all_params(&mut before)
        .into_iter()
        .zip(all_params(&mut after))
        .flat_map(|(b, a)| b.iter().zip(a.iter()).map(|(x, y)| x - y).collect::<Vec<_>>())
        .collect();

    let loss = |p: &ModelParams<f64>| p.loss(target, &slots(&window), &negatives).unwrap();
    let mut probe = params.clone();
    let mut numeric = Vec::with_capacity(analytic.len());
    let sizes: Vec<usize> = all_params(&mut probe).iter().map(|s| s.len()).collect();
    for (block, &len) in sizes.iter().enumerate() {
        for i in 0..len {
            let orig = all_params(&mut probe)[block][i];
            all_params(&mut probe)[block][i] = orig + FD_STEP;
            let up = loss(&probe);
            all_params(&mut probe)[block][i] = orig - FD_STEP;
            let down = loss(&probe);
            all_params(&mut probe)[block][i] = orig;
            numeric.push((up - down) / (2.0 * FD_STEP));
        }
    }
    analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(FD_FLOOR))
        .fold(0.0, f64::max)
}

pub const CAT_WORDS: [&str; 24] = [
    "cats", "kittens", "tabbies", "felines", "lynxes", "ocelots", "pumas", "cougars", "leopards",
    "jaguars", "tigers", "lions", "panthers", "bobcats", "cheetahs", "servals", "caracals",
    "margays", "manxes", "siameses", "persians", "calicos", "toms", "mousers",
];

pub const DOG_WORDS: [&str; 24] = [
    "dogs", "puppies", "hounds", "terriers", "beagles", "collies", "poodles", "spaniels",
    "setters", "pointers", "boxers", "bulldogs", "huskies", "mastiffs", "corgis", "pugs",
    "retrievers", "shepherds", "dachshunds", "greyhounds", "whippets", "labradors", "mutts",
    "wolves",
];

/// Pairs `(cat index, dog index)` kept out of training.
pub fn held_out(cat: usize, dog: usize) -> bool {
    (cat * 7 + dog * 3).is_multiple_of(5)
}

/// Sentences `unlike X , Y target` where Y decides the target and X is
/// drawn from the other class.
pub fn synthetic_grammar(sentences: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::with_capacity(sentences * 32);
    let mut written = 0;
    while written < sentences {
        let cat = rng.random_range(0..CAT_WORDS.len());
        let dog = rng.random_range(0..DOG_WORDS.len());
        if held_out(cat, dog) {
            continue;
        }
        let (x, y, target) = if rng.random::<bool>() {
            (DOG_WORDS[dog], CAT_WORDS[cat], "mew")
        } else {
            (CAT_WORDS[cat], DOG_WORDS[dog], "bark")
        };
        text.push_str(&format!("unlike {x} , {y} {target}\n"));
        written += 1;
    }
    text
}
