#![allow(dead_code)]

use std::path::{Path, PathBuf};

use cssl_core::model::ModelState;
use cssl_core::rng::{stream, Rng};
use cssl_core::{Graph, NodeId, Tensor};
use rand::Rng as _;

pub const FD_STEP: f64 = 1e-5;

pub fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/wisdm_two_subjects.txt")
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale < 1e-12 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

pub fn unit_rows(r: &mut Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / n).collect()
        })
        .collect()
}

/// Worst relative error between backward and central differences of
/// `sum(build(inputs) ⊙ w)` over every input, for a fixed random `w`.
/// `build` gets a fresh copy of the same random stream on every call.
pub fn fd_check_inputs(shapes: &[Vec<usize>], seed: u64, build: fn(&mut Graph, &[NodeId], &mut Rng) -> NodeId) -> f64 {
    let mut r = stream(seed, 400);
    let inputs: Vec<Tensor> = shapes.iter().map(|s| Tensor::uniform(s, -1.0, 1.0, &mut r)).collect();
    let eval = |xs: &[Tensor], g: &mut Graph, record: bool| -> (NodeId, Vec<NodeId>) {
        let ids: Vec<NodeId> = xs
            .iter()
            .map(|x| if record { g.input(x.clone()) } else { g.constant(x.clone()) })
            .collect();
        let out = build(g, &ids, &mut stream(seed, 401));
        let w = Tensor::uniform(g.value(out).shape(), -1.0, 1.0, &mut stream(seed, 402));
        let w = g.constant(w);
        let prod = g.mul(out, w).unwrap();
        (g.sum(prod), ids)
    };
    let mut g = Graph::new();
    let (loss, ids) = eval(&inputs, &mut g, true);
    g.backward(loss).unwrap();
    let mut worst: f64 = 0.0;
    for (k, x) in inputs.iter().enumerate() {
        let analytic = g.grad(ids[k]).map(|t| t.data().to_vec()).unwrap_or_else(|| vec![0.0; x.numel()]);
        let numeric: Vec<f64> = (0..x.numel())
            .map(|i| {
                let at = |delta: f64| {
                    let mut xs = inputs.clone();
                    xs[k].data_mut()[i] += delta;
                    let mut g = Graph::new();
                    let (l, _) = eval(&xs, &mut g, false);
                    g.value(l).item()
                };
                (at(FD_STEP) - at(-FD_STEP)) / (2.0 * FD_STEP)
            })
            .collect();
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    worst
}

/// Worst relative error over parameter tensors, checking `per_tensor`
/// random coordinates of each.
pub fn fd_check_params(
    model: &ModelState,
    per_tensor: usize,
    seed: u64,
    build: impl Fn(&mut Graph, &ModelState) -> NodeId,
) -> f64 {
    let mut g = Graph::new();
    let loss = build(&mut g, model);
    g.backward(loss).unwrap();
    let mut r = stream(seed, 403);
    let mut worst: f64 = 0.0;
    for (name, p) in model.params() {
        let n = p.value.numel();
        let coords: Vec<usize> = if n <= per_tensor {
            (0..n).collect()
        } else {
            (0..per_tensor).map(|_| r.random_range(0..n)).collect()
        };
        let analytic: Vec<f64> = match g.param_grad(name) {
            Some(grad) => coords.iter().map(|&i| grad.data()[i]).collect(),
            None => vec![0.0; coords.len()],
        };
        let numeric: Vec<f64> = coords
            .iter()
            .map(|&i| {
                let at = |delta: f64| {
                    let mut m = model.clone();
                    let (_, q) = m.trainable_mut().find(|(k, _)| k == name).expect("trainable");
                    q.value.data_mut()[i] += delta;
                    let mut g = Graph::new();
                    let l = build(&mut g, &m);
                    g.value(l).item()
                };
                (at(FD_STEP) - at(-FD_STEP)) / (2.0 * FD_STEP)
            })
            .collect();
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    worst
}

fn toml_path(p: &Path) -> String {
    format!("{:?}", p.display().to_string())
}

/// The synthetic continual setup of the ordering checks: 6 tasks of 2
/// classes, 200 windows per class, a reduced encoder.
pub fn synthetic_config(mode: &str, lambda: &str, seed: u64, root: &Path) -> String {
    format!(
        r#"
seed = {seed}
output_dir = {out}

[dataset]
source = "synthetic"
n_classes = 12
n_subjects = 6
windows_per_class = 200

[tasks]
source = "seeded"
n_tasks = 6

[continual]
mode = "{mode}"
lambda = "{lambda}"
epochs_per_task = 5
classifier_epochs = 10
batch_size = 32
replay_fraction = 0.1

[continual.optimizer]
kind = "adam"
learning_rate = 0.003

[model]
filters = [8, 8, 16]
kernels = [8, 4, 4]
dropout = 0.1
projector = {{ hidden = 32, out = 16 }}
predictor = {{ hidden = 32, out = 16 }}
distill = {{ hidden = 32, out = 16 }}
"#,
        out = toml_path(root)
    )
}

/// A seconds-long synthetic run.
pub fn small_config(mode: &str, seed: u64, root: &Path) -> String {
    format!(
        r#"
seed = {seed}
output_dir = {out}

[dataset]
source = "synthetic"
n_classes = 6
n_subjects = 4
windows_per_class = 12

[tasks]
source = "seeded"
n_tasks = 3

[continual]
mode = "{mode}"
lambda = "0.5+0.5"
epochs_per_task = 2
classifier_epochs = 2
batch_size = 16
replay_fraction = 0.1

[model]
filters = [4, 8]
kernels = [8, 4]
projector = {{ hidden = 16, out = 8 }}
predictor = {{ hidden = 16, out = 8 }}
distill = {{ hidden = 16, out = 8 }}
"#,
        out = toml_path(root)
    )
}

/// Two tasks over the fixture's four activities, default encoder.
pub fn wisdm_config(root: &Path) -> String {
    format!(
        r#"
seed = 0
output_dir = {out}

[dataset]
source = "wisdm"
path = {data}

[tasks]
source = "explicit"
tasks = [[0, 1], [2, 3]]

[continual]
mode = "kaizen"
epochs_per_task = 2
classifier_epochs = 2
batch_size = 8
"#,
        out = toml_path(root),
        data = toml_path(&fixture())
    )
}
