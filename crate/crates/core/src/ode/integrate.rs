//! Validated interval integration of plant models under constant inputs.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::round::{sub_down, sub_up};
use crate::interval::{Interval, IntervalBox};

use super::model::PlantModel;

pub const DEFAULT_SUBSTEPS: usize = 10;
pub const INITIAL_WIDENING: f64 = 0.05;
pub const INFLATION: f64 = 0.10;
pub const MAX_ROUNDS: usize = 50;

/// Enclosure of the state over a closed time interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowpipeSegment {
    pub t_lo: f64,
    pub t_hi: f64,
    pub states: IntervalBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeStep {
    pub segments: Vec<FlowpipeSegment>,
    pub x_next: IntervalBox,
}

fn check_dims(model: &PlantModel, x: &IntervalBox, u: &[Interval]) -> Result<()> {
    if x.dim() != model.n_states() {
        return Err(Error::dims(model.n_states(), x.dim()));
    }
    if u.len() != model.n_inputs() {
        return Err(Error::dims(model.n_inputs(), u.len()));
    }
    Ok(())
}

fn env(x: &[Interval], u: &[Interval]) -> Vec<Interval> {
    let mut e = Vec::with_capacity(x.len() + u.len());
    e.extend_from_slice(x);
    e.extend_from_slice(u);
    e
}

fn pad_for(d: &Interval) -> f64 {
    1e-9 * (1.0 + d.lo().abs().max(d.hi().abs()))
}

fn all_finite(v: &[Interval]) -> bool {
    v.iter().all(Interval::is_finite)
}

/// `X + tau * F(B, U)` componentwise.
fn picard_image(model: &PlantModel, x: &[Interval], b: &[Interval], u: &[Interval], tau: Interval) -> Result<Vec<Interval>> {
    let f = model.eval_derivs(&env(b, u))?;
    Ok(x.iter().zip(f).map(|(&xi, fi)| xi + tau * fi).collect())
}

fn subset(a: &[Interval], b: &[Interval]) -> bool {
    a.iter().zip(b).all(|(x, y)| x.is_subset_of(y))
}

/// `Err(rounds)` when no enclosure was found.
fn enclose(model: &PlantModel, x: &[Interval], u: &[Interval], h_up: f64) -> Result<std::result::Result<Vec<Interval>, usize>> {
    let tau = Interval::raw(0.0, h_up);
    let mut b: Vec<Interval> = x
        .iter()
        .map(|d| d.inflate(1.0 + INITIAL_WIDENING, pad_for(d)))
        .collect();
    for round in 1..=MAX_ROUNDS {
        let c = picard_image(model, x, &b, u, tau)?;
        if !all_finite(&c) {
            return Ok(Err(round));
        }
        if subset(&c, &b) {
            // c is itself an enclosure whenever the image is monotone in B;
            // confirm instead of assuming it.
            let cc = picard_image(model, x, &c, u, tau)?;
            return Ok(Ok(if subset(&cc, &c) { c } else { b }));
        }
        b = b
            .iter()
            .zip(&c)
            .map(|(bi, ci)| {
                let hl = bi.hull(ci);
                hl.inflate(1.0 + INFLATION, pad_for(&hl))
            })
            .collect();
    }
    Ok(Err(MAX_ROUNDS))
}

/// Box `B` with `X + [0,h]·F(B,U) ⊆ B`, so every solution starting in `X`
/// under a constant input in `U` stays in `B` on `[0, h]`.
pub fn apriori_enclosure(model: &PlantModel, x: &IntervalBox, u: &[Interval], h: f64) -> Result<IntervalBox> {
    check_dims(model, x, u)?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("step length must be positive, got {h}")));
    }
    match enclose(model, x.dims(), u, h)? {
        Ok(b) => Ok(IntervalBox::from_vec(b)),
        Err(rounds) => Err(Error::EnclosureFailure { substep: 0, rounds }),
    }
}

/// Checks `X + [0,h]·F(B,U) ⊆ B` exactly.
pub fn is_valid_enclosure(model: &PlantModel, x: &IntervalBox, u: &[Interval], h: f64, b: &IntervalBox) -> Result<bool> {
    check_dims(model, x, u)?;
    check_dims(model, b, u)?;
    let c = picard_image(model, x.dims(), b.dims(), u, Interval::raw(0.0, h))?;
    Ok(subset(&c, b.dims()))
}

/// One substep of length `dt`. The result is the intersection of three
/// enclosures of the solution set at the end of the substep: the a priori
/// box, the Euler step over it, and a mean-value form of the Euler map with
/// a second-order remainder.
fn substep(model: &PlantModel, x: &[Interval], u: &[Interval], dt: Interval, b: &[Interval]) -> Result<Option<Vec<Interval>>> {
    let n = x.len();
    let eb = env(b, u);
    let fb = model.eval_derivs(&eb)?;

    let xhat: Vec<Interval> = x.iter().map(|d| Interval::point(d.mid())).collect();
    let fhat = model.eval_derivs(&env(&xhat, u))?;
    let ex = env(x, u);
    let jac = model.jacobian();
    let half_dt2 = dt.sqr() * 0.5;

    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let euler = x[i] + dt * fb[i];

        let mut mv = xhat[i] + dt * fhat[i];
        let mut accel = Interval::point(0.0);
        for j in 0..n {
            let jx = jac[i][j].eval_interval(&ex)?;
            let mut coeff = dt * jx;
            if i == j {
                coeff = coeff + Interval::point(1.0);
            }
            mv = mv + coeff * (x[j] - xhat[j]);
            accel = accel + jac[i][j].eval_interval(&eb)? * fb[j];
        }
        mv = mv + half_dt2 * accel;

        let r = euler.intersect(&b[i]).and_then(|e| {
            if mv.is_finite() {
                e.intersect(&mv)
            } else {
                Some(e)
            }
        });
        match r {
            Some(r) => out.push(r),
            None => return Ok(None),
        }
    }
    Ok(Some(out))
}

/// `t0 + (t1 - t0)·i/m` for `i = 0..=m`, ending exactly at `t1`.
pub fn substep_times(t0: f64, t1: f64, m: usize) -> Vec<f64> {
    let h = t1 - t0;
    (0..=m)
        .map(|i| if i == m { t1 } else { t0 + h * (i as f64) / (m as f64) })
        .collect()
}

/// Integrates over `[t0, t1]` in `m` equal substeps with the input held in `U`.
/// Substep boundaries come from [`substep_times`].
pub fn reach_odex_span(
    model: &PlantModel,
    u: &[Interval],
    x: &IntervalBox,
    t0: f64,
    t1: f64,
    m: usize,
) -> Result<OdeStep> {
    check_dims(model, x, u)?;
    if !(t1 > t0 && t0.is_finite() && t1.is_finite()) {
        return Err(Error::InvalidArgument(format!("empty time span [{t0}, {t1}]")));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("substeps must be at least 1".into()));
    }
    let times = substep_times(t0, t1, m);
    let mut cur = x.dims().to_vec();
    let mut segments = Vec::with_capacity(m);
    for (k, w) in times.windows(2).enumerate() {
        let (a, z) = (w[0], w[1]);
        if z <= a {
            return Err(Error::InvalidArgument(format!("substep {k} has zero length")));
        }
        let dt = Interval::raw(sub_down(z, a), sub_up(z, a));
        let b = match enclose(model, &cur, u, dt.hi())? {
            Ok(b) => b,
            Err(rounds) => return Err(Error::EnclosureFailure { substep: k, rounds }),
        };
        let next = substep(model, &cur, u, dt, &b)?
            .ok_or(Error::EnclosureFailure { substep: k, rounds: 0 })?;
        segments.push(FlowpipeSegment {
            t_lo: a,
            t_hi: z,
            states: IntervalBox::from_vec(b),
        });
        cur = next;
    }
    Ok(OdeStep {
        segments,
        x_next: IntervalBox::from_vec(cur),
    })
}

/// Integrates over `[0, h]`; see [`reach_odex_span`].
pub fn reach_odex(model: &PlantModel, u: &[Interval], x: &IntervalBox, h: f64, m: usize) -> Result<OdeStep> {
    reach_odex_span(model, u, x, 0.0, h, m)
}

/// Encloses every declared output over the state box (and input box, for
/// outputs that reference inputs).
pub fn reach_odey(model: &PlantModel, x: &IntervalBox, u: Option<&[Interval]>) -> Result<IndexMap<String, Interval>> {
    if x.dim() != model.n_states() {
        return Err(Error::dims(model.n_states(), x.dim()));
    }
    let mut e = x.dims().to_vec();
    if let Some(u) = u {
        if u.len() != model.n_inputs() {
            return Err(Error::dims(model.n_inputs(), u.len()));
        }
        e.extend_from_slice(u);
    }
    let mut out = IndexMap::new();
    for (k, (name, expr)) in model.outputs().iter().enumerate() {
        if u.is_none() && model.output_uses_inputs(k) {
            let n = model.n_states();
            let mut missing = None;
            expr.visit_vars(&mut |i| {
                if i >= n && missing.is_none() {
                    missing = Some(model.var_names()[i].clone());
                }
            });
            return Err(Error::UnboundVariable(missing.unwrap_or_default()));
        }
        out.insert(name.clone(), expr.eval_interval(&e)?);
    }
    Ok(out)
}

/// Point value of every output.
pub fn eval_outputs(model: &PlantModel, x: &[f64], u: &[f64]) -> IndexMap<String, f64> {
    let mut e = x.to_vec();
    e.extend_from_slice(u);
    model
        .outputs()
        .iter()
        .map(|(n, expr)| (n.clone(), expr.eval(&e)))
        .collect()
}

/// Classical Runge-Kutta step under constant input `u`.
pub fn rk4_step(model: &PlantModel, x: &[f64], u: &[f64], dt: f64) -> Vec<f64> {
    let n = x.len();
    let mut e = vec![0.0; n + u.len()];
    e[n..].copy_from_slice(u);
    let mut f = |p: &[f64], out: &mut Vec<f64>| {
        e[..n].copy_from_slice(p);
        out.resize(n, 0.0);
        model.eval_derivs_point(&e, out);
    };
    let (mut k1, mut k2, mut k3, mut k4) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut tmp = vec![0.0; n];
    f(x, &mut k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    f(&tmp, &mut k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    f(&tmp, &mut k3);
    for i in 0..n {
        tmp[i] = x[i] + dt * k3[i];
    }
    f(&tmp, &mut k4);
    (0..n)
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// States at `t0 + h·i/steps` for `i = 0..=steps`.
pub fn rk4_trajectory(model: &PlantModel, x0: &[f64], u: &[f64], h: f64, steps: usize) -> Vec<Vec<f64>> {
    let dt = h / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(x0.to_vec());
    for _ in 0..steps {
        let next = rk4_step(model, out.last().unwrap(), u, dt);
        out.push(next);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn model(src: &str) -> PlantModel {
        PlantModel::parse(src).unwrap()
    }

    fn bx(b: &[(f64, f64)]) -> IntervalBox {
        IntervalBox::from_bounds(b).unwrap()
    }

    const ACC: &str = include_str!("../../../../fixtures/acc.model");

    #[test]
    fn enclosure_examples() {
        let zero = model("state x\nderiv x = 0");
        for h in [1e-3, 0.1, 10.0] {
            assert_eq!(apriori_enclosure(&zero, &bx(&[(1., 2.)]), &[], h).unwrap(), bx(&[(1., 2.)]));
        }
        let unit = model("state x\nderiv x = 1");
        let b = apriori_enclosure(&unit, &bx(&[(0., 0.)]), &[], 0.1).unwrap();
        assert!(b[0].lo() <= 0.0 && b[0].hi() >= 0.1);

        let decay = model("state x\nderiv x = -x");
        let b = apriori_enclosure(&decay, &bx(&[(1., 1.)]), &[], 0.1).unwrap();
        assert!(b[0].lo() <= (-0.1f64).exp() && b[0].hi() >= 1.0);
        for i in 0..=1000 {
            assert!(b[0].contains((-0.1 * i as f64 / 1000.0).exp()));
        }
    }

    #[test]
    fn enclosure_failure_on_oversized_step() {
        let blowup = model("state x\nderiv x = sqr(x)");
        let err = apriori_enclosure(&blowup, &bx(&[(1., 1.)]), &[], 5.0).unwrap_err();
        assert!(matches!(err, Error::EnclosureFailure { .. }));
        assert!(!err.is_input_error());
    }

    #[test]
    fn step_examples() {
        let zero = model("state x\nderiv x = 0");
        let s = reach_odex(&zero, &[], &bx(&[(1., 2.)]), 1.0, 4).unwrap();
        assert_eq!(s.x_next, bx(&[(1., 2.)]));
        assert_eq!(s.segments.len(), 4);
        assert!(s.segments.iter().all(|g| g.states == bx(&[(1., 2.)])));
        assert_eq!(s.segments[0].t_lo, 0.0);
        assert_eq!(s.segments[3].t_hi, 1.0);

        let unit = model("state x\nderiv x = 1");
        let s = reach_odex(&unit, &[], &bx(&[(0., 0.)]), 1.0, 10).unwrap();
        assert!(s.x_next[0].contains(1.0));
        assert!(s.x_next.width() <= 0.05, "{}", s.x_next);

        let decay = model("state x\nderiv x = -x");
        let s = reach_odex(&decay, &[], &bx(&[(1., 1.)]), 1.0, 100).unwrap();
        assert!(s.x_next[0].contains((-1.0f64).exp()));
        assert!(s.x_next.width() <= 0.1, "{}", s.x_next);
    }

    #[test]
    fn inputs_are_held_constant() {
        let m = model("state x\ninput u\nderiv x = u - x");
        let u = [Interval::new(1.0, 1.0)];
        let s = reach_odex(&m, &u, &bx(&[(0., 0.)]), 1.0, 50).unwrap();
        let exact = 1.0 - (-1.0f64).exp();
        assert!(s.x_next[0].contains(exact));
        assert!(reach_odex(&m, &[], &bx(&[(0., 0.)]), 1.0, 5).is_err());
        assert!(reach_odex(&m, &u, &bx(&[(0., 0.)]), 1.0, 0).is_err());
        assert!(reach_odex(&m, &u, &bx(&[(0., 0.)]), 0.0, 5).is_err());
    }

    #[test]
    fn accepted_enclosures_are_valid() {
        let m = model(ACC);
        let x = bx(&[(94., 96.), (30., 30.2), (0., 0.), (10., 11.), (30., 30.2), (0., 0.)]);
        let u = [Interval::point(-2.0), Interval::new(-1.0, 0.5)];
        let s = reach_odex(&m, &u, &x, 0.2, 10).unwrap();
        let mut cur = x.clone();
        for g in &s.segments {
            let h = g.t_hi - g.t_lo;
            assert!(is_valid_enclosure(&m, &cur, &u, sub_up(g.t_hi, g.t_lo), &g.states).unwrap());
            assert!(h > 0.0);
            cur = reach_odex_span(&m, &u, &cur, g.t_lo, g.t_hi, 1).unwrap().x_next;
        }
    }

    #[test]
    fn output_examples() {
        let m = model(ACC);
        let x = bx(&[(94., 96.), (30., 30.2), (0., 0.), (10., 11.), (30., 30.2), (0., 0.)]);
        let y = reach_odey(&m, &x, None).unwrap();
        assert_eq!(y["d_rel"], Interval::new(83.0, 86.0));
        let v = y["v_rel"];
        let d = 30.2 - 30.0;
        assert_eq!(v, Interval::new(-d, d));

        let id = model("state x\nderiv x = 0\noutput id = x");
        assert_eq!(reach_odey(&id, &bx(&[(-3., 5.)]), None).unwrap()["id"], Interval::new(-3., 5.));

        let uses_u = model("state x\ninput u\nderiv x = u\noutput y = x + u");
        assert_eq!(
            reach_odey(&uses_u, &bx(&[(0., 1.)]), None),
            Err(Error::UnboundVariable("u".into()))
        );
        let y = reach_odey(&uses_u, &bx(&[(0., 1.)]), Some(&[Interval::new(1., 2.)])).unwrap();
        assert_eq!(y["y"], Interval::new(1., 3.));
    }

    #[test]
    fn rk4_matches_analytic_decay() {
        let m = model("state x\nderiv x = -x");
        let traj = rk4_trajectory(&m, &[1.0], &[], 1.0, 100);
        assert_eq!(traj.len(), 101);
        assert!((traj[100][0] - (-1.0f64).exp()).abs() < 1e-9);
    }

    fn sample(b: &IntervalBox, rng: &mut impl Rng) -> Vec<f64> {
        b.dims()
            .iter()
            .map(|d| if d.width() > 0.0 { rng.gen_range(d.lo()..=d.hi()) } else { d.lo() })
            .collect()
    }

    #[test]
    fn simulations_stay_in_segments() {
        let cases: [(&str, Vec<(f64, f64)>, Vec<(f64, f64)>, f64); 3] = [
            (ACC, vec![(94., 96.), (30., 30.2), (0., 0.), (10., 11.), (30., 30.2), (0., 0.)], vec![(-2., -2.), (-3., 2.)], 1.0),
            ("state p q\ninput u\nderiv p = q\nderiv q = -sin(p) - 0.1*q + u", vec![(0.5, 0.7), (-0.1, 0.1)], vec![(-0.2, 0.2)], 2.0),
            ("state x\nderiv x = -x + tanh(x) * exp(-sqr(x))", vec![(-1.0, 2.0)], vec![], 1.0),
        ];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for (src, x, u, h) in cases {
            let m = model(src);
            let x = bx(&x);
            let ui: Vec<Interval> = u.iter().map(|&(a, b)| Interval::new(a, b)).collect();
            let m_sub = 20;
            let s = reach_odex(&m, &ui, &x, h, m_sub).unwrap();
            for _ in 0..100 {
                let x0 = sample(&x, &mut rng);
                let u0: Vec<f64> = u.iter().map(|&(a, b)| if b > a { rng.gen_range(a..=b) } else { a }).collect();
                let fine = 10 * m_sub;
                let traj = rk4_trajectory(&m, &x0, &u0, h, fine);
                for (i, p) in traj.iter().enumerate() {
                    let t = h * i as f64 / fine as f64;
                    let seg = s
                        .segments
                        .iter()
                        .find(|g| g.t_lo <= t && t <= g.t_hi)
                        .unwrap();
                    assert!(seg.states.contains_point(p).unwrap(), "{src}: t={t} {p:?} not in {}", seg.states);
                }
                assert!(s.x_next.contains_point(traj.last().unwrap()).unwrap());
            }
        }
    }

    #[test]
    fn halving_the_substep_does_not_widen_degenerate_starts() {
        let cases = [
            ("state x\nderiv x = 1", vec![(0., 0.)], 1.0),
            ("state x\nderiv x = -x", vec![(1., 1.)], 1.0),
            (ACC, vec![(95., 95.), (30., 30.), (0., 0.), (10., 10.), (30., 30.), (0., 0.)], 0.2),
        ];
        for (src, x, h) in cases {
            let m = model(src);
            let u: Vec<Interval> = (0..m.n_inputs()).map(|_| Interval::point(-2.0)).collect();
            let mut prev = f64::INFINITY;
            for sub in [5, 10, 20, 40, 80] {
                let w = reach_odex(&m, &u, &bx(&x), h, sub).unwrap().x_next.width();
                assert!(w <= prev + 1e-12, "{src}: m={sub} width {w} > {prev}");
                prev = w;
            }
        }
    }
}
