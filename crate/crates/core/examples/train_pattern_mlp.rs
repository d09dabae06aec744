//! Regenerates the shipped pattern classifier and its sample images.
//!
//! Class 0 images carry horizontal bars, class 1 images vertical bars, on a
//! noisy 12x12 background. A 144-16-2 ReLU network is trained with plain
//! SGD on softmax cross-entropy. Everything is seeded, so reruns reproduce
//! the committed files byte for byte.
//!
//! ```text
//! cargo run -p hardlabel-core --example train_pattern_mlp -- crates/core/fixtures
//! ```

use std::path::PathBuf;

use hardlabel_core::imageio::{read_image, write_image};
use hardlabel_core::oracle::{Activation, MlpFile, MlpLayerSpec, MlpOracle};
use hardlabel_core::{Classifier, ImageTensor, Label, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const SIDE: usize = 12;
const HIDDEN: usize = 16;
const CLASSES: usize = 2;

fn pattern(class: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let noise = Normal::<f64>::new(0.0, 0.05).unwrap();
    let background: f64 = rng.random_range(0.1..0.3);
    let bar: f64 = rng.random_range(0.7..0.9);
    let first = rng.random_range(1..SIDE - 4);
    let lines = [first, first + rng.random_range(2..4)];
    let mut px = vec![0.0; SIDE * SIDE];
    for r in 0..SIDE {
        for c in 0..SIDE {
            let along = if class == 0 { r } else { c };
            let base = if lines.contains(&along) { bar } else { background };
            px[r * SIDE + c] = (base + noise.sample(rng)).clamp(0.0, 1.0);
        }
    }
    px
}

struct Net {
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

impl Net {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let n = SIDE * SIDE;
        let init = |fan_in: usize, count: usize, rng: &mut ChaCha8Rng| {
            let d = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
            (0..count).map(|_| d.sample(rng)).collect::<Vec<f64>>()
        };
        Self {
            w1: init(n, HIDDEN * n, rng),
            b1: vec![0.0; HIDDEN],
            w2: init(HIDDEN, CLASSES * HIDDEN, rng),
            b2: vec![0.0; CLASSES],
        }
    }

    fn hidden(&self, x: &[f64]) -> Vec<f64> {
        self.w1
            .chunks_exact(x.len())
            .zip(&self.b1)
            .map(|(row, b)| (row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b).max(0.0))
            .collect()
    }

    fn logits(&self, h: &[f64]) -> Vec<f64> {
        self.w2
            .chunks_exact(HIDDEN)
            .zip(&self.b2)
            .map(|(row, b)| row.iter().zip(h).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    fn sgd_step(&mut self, x: &[f64], label: usize, lr: f64) {
        let h = self.hidden(x);
        let z = self.logits(&h);
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
        let sum: f64 = e.iter().sum();
        let dz: Vec<f64> = e
            .iter()
            .enumerate()
            .map(|(k, v)| v / sum - f64::from(u8::from(k == label)))
            .collect();
        let mut dh = vec![0.0; HIDDEN];
        for k in 0..CLASSES {
            for i in 0..HIDDEN {
                dh[i] += dz[k] * self.w2[k * HIDDEN + i];
                self.w2[k * HIDDEN + i] -= lr * dz[k] * h[i];
            }
            self.b2[k] -= lr * dz[k];
        }
        for i in 0..HIDDEN {
            if h[i] <= 0.0 {
                continue;
            }
            for (j, v) in x.iter().enumerate() {
                self.w1[i * x.len() + j] -= lr * dh[i] * v;
            }
            self.b1[i] -= lr * dh[i];
        }
    }

    fn into_file(self) -> MlpFile {
        let n = SIDE * SIDE;
        MlpFile {
            num_classes: CLASSES,
            input_shape: Shape::new(SIDE, SIDE, 1),
            layers: vec![
                MlpLayerSpec {
                    rows: HIDDEN,
                    cols: n,
                    activation: Activation::Relu,
                    weights: self.w1,
                    bias: self.b1,
                },
                MlpLayerSpec {
                    rows: CLASSES,
                    cols: HIDDEN,
                    activation: Activation::Identity,
                    weights: self.w2,
                    bias: self.b2,
                },
            ],
        }
    }
}

fn main() {
    let out: PathBuf = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "crates/core/fixtures".into())
        .into();
    std::fs::create_dir_all(&out).expect("create output directory");
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let shape = Shape::new(SIDE, SIDE, 1);

    let train: Vec<(Vec<f64>, usize)> = (0..2000).map(|i| (pattern(i % 2, &mut rng), i % 2)).collect();
    let test: Vec<(Vec<f64>, usize)> = (0..400).map(|i| (pattern(i % 2, &mut rng), i % 2)).collect();

    let mut net = Net::new(&mut rng);
    for _ in 0..5 {
        for (x, y) in &train {
            net.sgd_step(x, *y, 0.01);
        }
    }
    let file = net.into_file();
    let json = serde_json::to_string(&file).expect("serialize network");
    let oracle = MlpOracle::from_file(file).expect("valid network");

    let correct = test
        .iter()
        .filter(|(x, y)| {
            let img = ImageTensor::new(shape, 1.0, x.clone()).unwrap();
            oracle.classify(&img).unwrap() == Label(*y)
        })
        .count();
    println!("held-out accuracy: {correct}/{}", test.len());

    std::fs::write(out.join("pattern_mlp.json"), json).expect("write network");
    for (name, class) in [("source.pgm", 0), ("reference.pgm", 1)] {
        let img = ImageTensor::new(shape, 1.0, pattern(class, &mut rng)).unwrap();
        let path = out.join(name);
        write_image(&path, &img).expect("write image");
        let label = oracle.classify(&read_image(&path, Some(1.0)).unwrap()).unwrap();
        assert_eq!(label, Label(class), "{name} misclassified after quantization");
        println!("{name}: class {class}");
    }
}
