//! Deterministic case lists shared by the integration tests and the acceptance run.

use qpeft_core::adapter::{AdapterSpec, FactorSpec, Lambda};
use qpeft_core::csd::{factor_for_dim, CsdNode, LeafSpec};
use qpeft_core::diag::{RademacherDiag, RealDiag};
use qpeft_core::grad::{gradcheck, GradTape, SteMode};
use qpeft_core::lie::{Init, LieConfig, LieParams};
use qpeft_core::maps::{contracted_apply, LieMap, MapKind};
use qpeft_core::pauli::{brickwork_layout, TwoDesignCircuit};
use qpeft_core::{Mat, OrthoFactor, Orthogonal, QuantConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

pub const MAP_KINDS: [MapKind; 6] = [
    MapKind::Exponential,
    MapKind::Taylor { order: 8 },
    MapKind::Cayley,
    MapKind::Neumann { order: 8 },
    MapKind::Householder,
    MapKind::Givens,
];

fn rand_mat(r: usize, c: usize, rng: &mut ChaCha8Rng) -> Mat<f64> {
    Mat::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

fn inner(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

pub fn lie_factor(n: usize, k: usize, kp: usize, scale: f64, kind: MapKind, rng: &mut ChaCha8Rng) -> OrthoFactor<f64> {
    let cfg = LieConfig::new(n, k).intrinsic_rank(kp).init(Init::Uniform(scale));
    OrthoFactor::Lie(LieMap::new(LieParams::from_config(&cfg, rng).unwrap(), kind).unwrap())
}

/// Random Pauli-leaf cosine-sine tree of size `n` together with its dense oracle.
pub fn random_tree(n: usize, layers: usize, rng: &mut ChaCha8Rng) -> (OrthoFactor<f64>, Dense) {
    if n == 1 {
        return (OrthoFactor::identity(1), eye(1));
    }
    if n.is_power_of_two() {
        let q = n.trailing_zeros() as usize;
        let c = TwoDesignCircuit::<f64>::random(q, layers, rng).unwrap();
        let d = circuit_dense(&brickwork_layout(q, layers), q, c.angles());
        return (OrthoFactor::Pauli(c), d);
    }
    let n1 = 1usize << (usize::BITS - 1 - n.leading_zeros());
    let n2 = n - n1;
    let (u1, du1) = random_tree(n1, layers, rng);
    let (u2, du2) = random_tree(n2, layers, rng);
    let (v1, dv1) = random_tree(n2, layers, rng);
    let (v2, dv2) = random_tree(n1, layers, rng);
    let angles: Vec<f64> = (0..n2).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let dense = csd_assemble(&du1, &du2, &dv1, &dv2, &angles);
    let node = CsdNode::new(angles, u1, u2, v1, v2).unwrap();
    (OrthoFactor::Csd(Box::new(node)), dense)
}

/// Gradcheck of `θ ↦ ⟨G, Q(θ)·X⟩` (or `Qᵀ`) and of the input gradient.
fn factor_case(f: &OrthoFactor<f64>, batch: usize, transpose: bool, rng: &mut ChaCha8Rng) -> f64 {
    let n = f.dim();
    let x = rand_mat(n, batch, rng);
    let g = rand_mat(n, batch, rng);
    let eval = |theta: &[f64], x: &Mat<f64>| -> qpeft_core::Result<f64> {
        let mut h = f.clone();
        h.set_params(theta)?;
        let y = if transpose { h.apply_transpose(x)? } else { h.apply(x)? };
        Ok(inner(&g, &y))
    };
    let (dp, dx) = if transpose {
        f.apply_transpose_vjp(&x, &g).unwrap()
    } else {
        f.apply_vjp(&x, &g).unwrap()
    };
    let theta = f.params();
    let rp = gradcheck(|t| eval(t, &x), &theta, &dp).unwrap();
    let rx = gradcheck(
        |xs| eval(&theta, &Mat::from_vec(n, batch, xs.to_vec()).unwrap()),
        x.as_slice(),
        dx.as_slice(),
    )
    .unwrap();
    rp.max_rel_error.max(rx.max_rel_error)
}

/// `(case name, max relative gradcheck error)` for every differentiable operation.
pub fn gradient_cases() -> Vec<(String, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut out = Vec::new();
    let ry = OrthoFactor::Pauli(TwoDesignCircuit::random(1, 0, &mut rng).unwrap());
    out.push(("ry".to_string(), factor_case(&ry, 2, false, &mut rng)));
    for (q, l) in [(3, 1), (4, 2)] {
        let c = OrthoFactor::Pauli(TwoDesignCircuit::random(q, l, &mut rng).unwrap());
        out.push((format!("circuit q={q} L={l}"), factor_case(&c, 2, false, &mut rng)));
        out.push((format!("circuit q={q} L={l} transpose"), factor_case(&c, 2, true, &mut rng)));
    }
    for kind in MAP_KINDS {
        let f = lie_factor(8, 3, 3, 0.3, kind, &mut rng);
        out.push((format!("{kind}"), factor_case(&f, 2, false, &mut rng)));
        out.push((format!("{kind} transpose"), factor_case(&f, 2, true, &mut rng)));
        let f = lie_factor(12, 4, 2, 0.3, kind, &mut rng);
        out.push((format!("{kind} K'=2"), factor_case(&f, 3, false, &mut rng)));
    }
    let (tree, _) = random_tree(12, 1, &mut rng);
    out.push(("csd (8, 4) pauli leaves".into(), factor_case(&tree, 2, false, &mut rng)));
    out.push(("csd (8, 4) transpose".into(), factor_case(&tree, 2, true, &mut rng)));
    let mut lie_tree = factor_for_dim::<f64>(7, &LeafSpec::Lie { kind: MapKind::Cayley }).unwrap();
    let theta: Vec<f64> = (0..lie_tree.num_params()).map(|_| rng.gen_range(-0.5..0.5)).collect();
    lie_tree.set_params(&theta).unwrap();
    out.push(("csd (4, (2, 1)) cayley leaves".into(), factor_case(&lie_tree, 2, false, &mut rng)));
    out.push(("rademacher surrogate".into(), rademacher_case(&mut rng)));
    out.push(("tape algebra".into(), tape_case(&mut rng)));
    for (n, m, u, v) in [
        (16, 16, FactorSpec::Pauli { layers: 1 }, FactorSpec::Pauli { layers: 1 }),
        (24, 20, FactorSpec::Pauli { layers: 1 }, FactorSpec::lie(MapKind::Taylor { order: 6 })),
        (32, 12, FactorSpec::lie(MapKind::Cayley), FactorSpec::lie(MapKind::Householder)),
        (
            20,
            32,
            FactorSpec::Lie { kind: MapKind::Exponential, intrinsic_rank: Some(2), init_scale: 0.2 },
            FactorSpec::lie(MapKind::Givens),
        ),
    ] {
        out.push((format!("adapter {n}x{m}"), adapter_case(n, m, &u, &v, &mut rng)));
    }
    out
}

fn rademacher_case(rng: &mut ChaCha8Rng) -> f64 {
    let tmpl = RademacherDiag::new(vec![0.0; 5]).with_temperature(0.7).unwrap();
    let logits: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let x = rand_mat(5, 3, rng);
    let run = |l: &[f64]| -> qpeft_core::Result<(f64, Vec<f64>)> {
        let mut t = GradTape::with_mode(SteMode::Surrogate);
        let lv = t.param("l", Mat::column(l));
        let xv = t.constant(x.clone());
        let d = t.rademacher(&tmpl, lv)?;
        let y = t.scale_rows(xv, d)?;
        let s = t.sum_squares(y);
        let val = t.value(s)[(0, 0)];
        let g = t.backward(s, None)?;
        Ok((val, g.get("l").unwrap().as_slice().to_vec()))
    };
    let (_, grad) = run(&logits).unwrap();
    gradcheck(|l| Ok(run(l)?.0), &logits, &grad).unwrap().max_rel_error
}

fn tape_case(rng: &mut ChaCha8Rng) -> f64 {
    let c = rand_mat(6, 3, rng);
    let (na, nb, nd) = (6 * 4, 4 * 3, 6);
    let theta: Vec<f64> = (0..na + nb + nd).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let qcfg = QuantConfig::uniform(4, 8);
    let run = |th: &[f64]| -> qpeft_core::Result<(f64, Vec<f64>)> {
        let mut t = GradTape::with_mode(SteMode::Surrogate);
        let a = t.param("a", Mat::from_vec(6, 4, th[..na].to_vec())?);
        let b = t.param("b", Mat::from_vec(4, 3, th[na..na + nb].to_vec())?);
        let d = t.param("d", Mat::column(&th[na + nb..]));
        let cv = t.constant(c.clone());
        let bq = t.quantize_ste(b, &qcfg)?;
        let ab = t.matmul(a, bq)?;
        let sc = t.scale_rows(ab, d)?;
        let tr = t.transpose(sc);
        let tt = t.transpose(tr);
        let k = t.take_rows(tt, 4)?;
        let p = t.pad_rows(k, 6)?;
        let sum = t.add(p, cv)?;
        let diff = t.sub(sum, ab)?;
        let half = t.scale(diff, 0.5);
        let s = t.sum_squares(half);
        let val = t.value(s)[(0, 0)];
        let g = t.backward(s, None)?;
        Ok((val, g.flatten()))
    };
    let (_, grad) = run(&theta).unwrap();
    // flatten orders by name: a, b, d
    gradcheck(|th| Ok(run(th)?.0), &theta, &grad).unwrap().max_rel_error
}

/// Gradient of `⟨G, (W + ΔW)·X⟩` with respect to `U`, `V`, `Λ` and `X`.
fn adapter_case(n: usize, m: usize, u: &FactorSpec, v: &FactorSpec, rng: &mut ChaCha8Rng) -> f64 {
    let k = 4;
    let mut spec = AdapterSpec::<f64>::build(n, m, k, u, v, rng).unwrap();
    let lam: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
    spec.lambda = Lambda::Real(RealDiag { values: lam.clone() });
    spec.alpha = 2.0;
    let w = rand_mat(n, m, rng);
    let x = rand_mat(m, 2, rng);
    let g = rand_mat(n, 2, rng);
    let (pu, pv) = (spec.u.params(), spec.v.params());
    let at: Vec<f64> = pu.iter().chain(&pv).chain(&lam).chain(x.as_slice()).copied().collect();
    let (nu, nv) = (pu.len(), pv.len());
    let eval = |th: &[f64]| -> qpeft_core::Result<f64> {
        let mut s = spec.clone();
        s.u.set_params(&th[..nu])?;
        s.v.set_params(&th[nu..nu + nv])?;
        s.lambda.set_params(&th[nu + nv..nu + nv + k])?;
        let xs = Mat::from_vec(m, 2, th[nu + nv + k..].to_vec())?;
        Ok(inner(&g, &s.forward(&w, &xs)?))
    };
    let gr = spec.vjp(&w, &x, &g).unwrap();
    let analytic: Vec<f64> = gr.u.iter().chain(&gr.v).chain(&gr.lambda).chain(gr.x.as_slice()).copied().collect();
    gradcheck(eval, &at, &analytic).unwrap().max_rel_error
}

/// `(case name, max relative error)` of fast apply routes against dense oracles.
pub fn equivalence_cases() -> Vec<(String, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut out = Vec::new();
    for q in 1..=10 {
        let mut worst: f64 = 0.0;
        for l in 0..=2 {
            let c = TwoDesignCircuit::<f64>::random(q, l, &mut rng).unwrap();
            let x: Vec<f64> = (0..1 << q).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let got = c.apply(&Mat::column(&x)).unwrap().into_vec();
            worst = worst.max(rel_err(&got, &circuit_apply(&brickwork_layout(q, l), q, c.angles(), &x)));
        }
        out.push((format!("kronecker apply q={q}"), worst));
    }
    for kind in MAP_KINDS.into_iter().chain([MapKind::Taylor { order: 18 }, MapKind::Neumann { order: 18 }]) {
        let mut worst: f64 = 0.0;
        for n in [2usize, 3, 5, 8, 16, 17, 32, 48, 64] {
            let k = 4.min(n - 1);
            let cfg = LieConfig::new(n, k).init(Init::Uniform(0.05));
            let p = LieParams::from_config(&cfg, &mut rng).unwrap();
            let b = p.masked_entries(kind.support());
            let dense = match kind {
                MapKind::Exponential => expm(&skew(&b)),
                MapKind::Taylor { order } => taylor(&skew(&b), order),
                MapKind::Cayley => cayley(&skew(&b)),
                MapKind::Neumann { order } => neumann(&skew(&b), order),
                MapKind::Householder => householder(&b),
                MapKind::Givens => givens(&b),
            };
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            worst = worst.max(rel_err(&contracted_apply(&p, kind, &x).unwrap(), &matvec(&dense, &x)));
        }
        out.push((format!("contracted {kind} N'<=64"), worst));
    }
    let mut worst: f64 = 0.0;
    for n in 1..=64 {
        let (f, dense) = random_tree(n, 1, &mut rng);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        worst = worst.max(rel_err(&f.apply(&Mat::column(&x)).unwrap().into_vec(), &matvec(&dense, &x)));
    }
    out.push(("csd apply N<=64".into(), worst));
    out
}
