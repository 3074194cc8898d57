//! Finite-difference checks of the objective on small random instances.

#![allow(dead_code)]

use std::rc::Rc;

use dmcd::augment::SeededRng;
use dmcd::engine::{loss_terms, objective, LossNodes, ObjectiveInputs, ObjectiveSettings};
use dmcd::losses::{CtxNormalization, LossWeights};
use dmcd::networks::{DcpgConfig, DcpgNetwork, DfeConfig, DfeNetwork};
use dmcd::tensor::{Metric, Tape, Tensor, Var};

pub const EPSILON: f64 = 1e-3;
pub const TOLERANCE: f64 = 1e-3;
/// Denominator floor of the relative error, for entries whose gradient is ~0.
pub const FLOOR: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Term {
    Img,
    Feat,
    Ctx,
    Sparse,
    Total,
}

pub const TERMS: [Term; 5] = [Term::Img, Term::Feat, Term::Ctx, Term::Sparse, Term::Total];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Wrt {
    Dcpg,
    Dfe,
    Pc,
}

pub const WRTS: [Wrt; 3] = [Wrt::Dcpg, Wrt::Dfe, Wrt::Pc];

pub struct Instance {
    pub inputs: ObjectiveInputs<f64>,
    pub dcpg: DcpgNetwork<f64>,
    pub dfe: DfeNetwork<f64>,
    pub pc: Tensor<f64>,
    pub settings: ObjectiveSettings,
}

fn uniform(rng: &mut SeededRng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(lo, hi)).collect()).unwrap()
}

/// Random `8 x 8`, two-band instance with a one-stage extractor.
pub fn instance(seed: u64) -> Instance {
    let (h, w, b) = (8, 8, 2);
    let mut rng = SeededRng::new(seed);
    let pre = uniform(&mut rng, &[1, b, h, w], 0.0, 1.0);
    let post = uniform(&mut rng, &[1, b, h, w], 0.0, 1.0);
    let difference = uniform(&mut rng, &[1, 1, h, w], 0.0, 3.0);
    let (a, d, c) = (rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0), rng.uniform(-0.3, 0.3));
    let image_metric = Rc::new(Metric::full(2, vec![a, c, c, d]).unwrap());
    let pre_rgb = uniform(&mut rng, &[1, 3, h, w], -2.0, 2.0);
    let post_rgb = uniform(&mut rng, &[1, 3, h, w], -2.0, 2.0);
    let pre_aug = Tensor::new(
        pre_rgb.shape().to_vec(),
        pre_rgb.data().iter().map(|v| 0.9 * v + rng.uniform(-0.1, 0.1)).collect(),
    )
    .unwrap();
    let post_aug = Tensor::new(
        post_rgb.shape().to_vec(),
        post_rgb.data().iter().map(|v| 1.1 * v + rng.uniform(-0.1, 0.1)).collect(),
    )
    .unwrap();
    let mut dfe_config = DfeConfig::vgg16(1).unwrap();
    dfe_config.seed = seed ^ 0x5eed;
    let dfe = DfeNetwork::new(dfe_config).unwrap();
    let feature_metrics = dfe
        .tap_channels()
        .iter()
        .map(|&c| Rc::new(Metric::Diagonal((0..c).map(|_| rng.uniform(0.5, 2.0)).collect())))
        .collect();
    let dcpg = DcpgNetwork::new(DcpgConfig {
        blocks: 2,
        channels: 4,
        kernel_size: 3,
        input_channels: 1,
        seed,
    })
    .unwrap();
    let pc = uniform(&mut rng, &[1, 1, h, w], 0.1, 0.9);
    let settings = ObjectiveSettings {
        weights: LossWeights {
            alpha_feat: vec![1.0],
            ..LossWeights::default()
        },
        ctx_normalization: CtxNormalization::Mean,
        ctx_stop_gradient: false,
    };
    Instance {
        inputs: ObjectiveInputs {
            difference,
            pre,
            post,
            image_metric,
            pre_rgb,
            post_rgb,
            pre_aug,
            post_aug,
            feature_metrics,
        },
        dcpg,
        dfe,
        pc,
        settings,
    }
}

fn pick(nodes: &LossNodes, term: Term) -> Var {
    match term {
        Term::Img => nodes.img,
        Term::Feat => nodes.feat,
        Term::Ctx => nodes.ctx,
        Term::Sparse => nodes.sparse,
        Term::Total => nodes.total,
    }
    .expect("every term is enabled")
}

/// Records the objective; returns the root of `term` and the leaves of `wrt`.
fn record(tape: &mut Tape<f64>, inst: &Instance, term: Term, wrt: Wrt) -> (Var, Vec<Var>) {
    let dcpg_vars = inst.dcpg.bind(tape, true);
    let dfe_vars = inst.dfe.bind(tape);
    let (nodes, pc_leaf) = if wrt == Wrt::Pc {
        let pc = tape.param(inst.pc.clone());
        let nodes = loss_terms(tape, pc, &inst.inputs, &inst.dfe, &dfe_vars, &inst.settings).unwrap();
        (nodes, vec![pc])
    } else {
        let (_, nodes) = objective(
            tape,
            &inst.inputs,
            &inst.dcpg,
            &dcpg_vars,
            &inst.dfe,
            &dfe_vars,
            &inst.settings,
        )
        .unwrap();
        (nodes, Vec::new())
    };
    let leaves = match wrt {
        Wrt::Dcpg => dcpg_vars,
        Wrt::Dfe => dfe_vars,
        Wrt::Pc => pc_leaf,
    };
    (pick(&nodes, term), leaves)
}

pub fn value(inst: &Instance, term: Term, wrt: Wrt) -> f64 {
    let mut tape = Tape::new();
    let (root, _) = record(&mut tape, inst, term, wrt);
    tape.value(root).data()[0]
}

pub fn analytic(inst: &Instance, term: Term, wrt: Wrt) -> Vec<Tensor<f64>> {
    let mut tape = Tape::new();
    let (root, leaves) = record(&mut tape, inst, term, wrt);
    let grads = tape.backward(root).unwrap();
    leaves.iter().map(|&v| grads.get(v).expect("leaf is tracked").clone()).collect()
}

fn entry(inst: &mut Instance, wrt: Wrt, tensor: usize, index: usize) -> &mut f64 {
    let t = match wrt {
        Wrt::Dcpg => &mut inst.dcpg.params_mut().tensors_mut()[tensor],
        Wrt::Dfe => &mut inst.dfe.params_mut().tensors_mut()[tensor],
        Wrt::Pc => &mut inst.pc,
    };
    &mut t.data_mut()[index]
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

#[derive(Clone, Debug)]
pub struct Check {
    pub term: Term,
    pub wrt: Wrt,
    pub checked: usize,
    pub worst: f64,
    pub failures: Vec<String>,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Central differences of step `epsilon` on every entry of tensors with at most `max_entries`
/// elements and a seeded random sample of `max_entries` entries otherwise.
pub fn check(inst: &mut Instance, term: Term, wrt: Wrt, max_entries: usize, seed: u64, epsilon: f64) -> Check {
    let grads = analytic(inst, term, wrt);
    let mut rng = SeededRng::new(seed);
    let mut out = Check {
        term,
        wrt,
        checked: 0,
        worst: 0.0,
        failures: Vec::new(),
    };
    for (t, g) in grads.iter().enumerate() {
        let n = g.numel();
        let indices: Vec<usize> = if n <= max_entries {
            (0..n).collect()
        } else {
            (0..max_entries).map(|_| (rng.next_u64() % n as u64) as usize).collect()
        };
        for i in indices {
            let orig = *entry(inst, wrt, t, i);
            *entry(inst, wrt, t, i) = orig + epsilon;
            let plus = value(inst, term, wrt);
            *entry(inst, wrt, t, i) = orig - epsilon;
            let minus = value(inst, term, wrt);
            *entry(inst, wrt, t, i) = orig;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = g.data()[i];
            let err = relative_error(a, numeric);
            out.checked += 1;
            out.worst = out.worst.max(err);
            if err > TOLERANCE {
                out.failures.push(format!(
                    "{term:?} wrt {wrt:?} tensor {t} entry {i}: analytic {a:.6e}, numeric {numeric:.6e}"
                ));
            }
        }
    }
    out
}

/// Runs every term against every parameter group on `instances` random instances.
pub fn gradient_suite(instances: u64, max_entries: usize, epsilon: f64) -> Vec<Check> {
    let mut all = Vec::new();
    for seed in 0..instances {
        let mut inst = instance(100 + seed);
        for term in TERMS {
            for wrt in WRTS {
                all.push(check(&mut inst, term, wrt, max_entries, seed * 31 + wrt as u64, epsilon));
            }
        }
    }
    all
}
