//! Experiment runners. Each produces a [`Table`] that is written as CSV.

use risklab::asymptotics::{uniformity_scan, Box2, TiltedSet};
use risklab::copulas::Copula;
use risklab::counterexample::CounterexampleDensity;
use risklab::marginals::{almost_decreasing_constant, Marginal};
use risklab::renewal::step_halving_gap;
use risklab::simulator::{
    lemma33_check, scan_discounted_claims, simulate_net_loss, stratified_estimate, Estimate,
};
use risklab::Result;

use crate::config::{Experiment, RunConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| *h == name)
    }
}

/// Shortest round-trip decimal, switching to exponent form outside `[1e-5, 1e16)`.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn note(msg: impl AsRef<str>) {
    eprintln!("{}", msg.as_ref());
}

fn boxes(cfg: &RunConfig) -> Result<Vec<Box2>> {
    cfg.x_grid.iter().map(|&x| Box2::new(x, x, cfg.window[0], cfg.window[1])).collect()
}

fn box_cols(bx: &Box2) -> [String; 4] {
    [num(bx.x[0]), num(bx.x[1]), num(bx.d[0]), num(bx.d[1])]
}

fn tilted(cfg: &RunConfig) -> Result<TiltedSet> {
    TiltedSet::new(&cfg.model.spec, cfg.model.horizon, cfg.renewal_step)
}

pub fn run(experiment: Experiment, cfg: &RunConfig) -> Result<Table> {
    match experiment {
        Experiment::Simulate => simulate(cfg),
        Experiment::Asymptotic => asymptotic(cfg),
        Experiment::Compare => compare(cfg),
        Experiment::Renewal => renewal(cfg),
        Experiment::CopulaCheck => copula_check(cfg),
        Experiment::Counterexample => counterexample(cfg),
        Experiment::VerifyConditions => verify_conditions(cfg),
        Experiment::Lemma33 => lemma33(cfg),
    }
}

fn estimate_cols(e: &Estimate) -> [String; 7] {
    [
        num(e.value),
        num(e.std_error),
        num(e.ci95.0),
        num(e.ci95.1),
        e.hits.to_string(),
        e.n.to_string(),
        e.unreliable.to_string(),
    ]
}

fn simulate(cfg: &RunConfig) -> Result<Table> {
    let mut table = Table::new(&[
        "t", "x1", "x2", "d1", "d2", "r", "target", "estimate", "std_error", "ci_lo", "ci_hi", "hits", "n", "unreliable",
    ]);
    let m = &cfg.model;
    let bxs = boxes(cfg)?;
    let target = if cfg.net_loss { "net_loss" } else { "discounted_claims" };
    let mut estimates = Vec::new();
    if cfg.net_loss {
        for &t in &cfg.t_grid {
            for bx in &bxs {
                note(format!("simulate: net loss at t={t}, x={:?}", bx.x));
                estimates.push(simulate_net_loss(m, bx.x, t, bx.d)?);
            }
        }
    } else if let Some(n_cap) = cfg.stratify_n_cap {
        for &t in &cfg.t_grid {
            for bx in &bxs {
                note(format!("simulate: stratified (n_cap={n_cap}) at t={t}, x={:?}", bx.x));
                estimates.push(stratified_estimate(m, t, bx, n_cap)?.estimate);
            }
        }
    } else {
        note(format!("simulate: {} paths over {} times and {} boxes", m.n_samples, cfg.t_grid.len(), bxs.len()));
        estimates = scan_discounted_claims(m, &cfg.t_grid, &bxs)?.into_iter().flatten().collect();
    }
    let mut it = estimates.iter();
    for &t in &cfg.t_grid {
        for bx in &bxs {
            let e = it.next().expect("one estimate per cell");
            let mut row = vec![num(t)];
            row.extend(box_cols(bx));
            row.extend([num(m.r), target.to_string()]);
            row.extend(estimate_cols(e));
            table.push(row);
        }
    }
    Ok(table)
}

fn asymptotic(cfg: &RunConfig) -> Result<Table> {
    let mut table =
        Table::new(&["t", "x1", "x2", "d1", "d2", "r", "asymptotic_total", "cross_term", "diagonal_term"]);
    let set = tilted(cfg)?;
    for &t in &cfg.t_grid {
        for bx in boxes(cfg)? {
            let v = set.rhs(&cfg.model.spec, &bx, cfg.model.r, t)?;
            let mut row = vec![num(t)];
            row.extend(box_cols(&bx));
            row.extend([num(cfg.model.r), num(v.total), num(v.cross_term), num(v.diagonal_term)]);
            table.push(row);
        }
    }
    Ok(table)
}

fn compare(cfg: &RunConfig) -> Result<Table> {
    let mut table = Table::new(&[
        "t",
        "x1",
        "x2",
        "d1",
        "d2",
        "r",
        "asymptotic_total",
        "cross_term",
        "diagonal_term",
        "empirical",
        "empirical_se",
        "ratio",
    ]);
    let set = tilted(cfg)?;
    note(format!("compare: {} paths", cfg.model.n_samples));
    let scan = uniformity_scan(&cfg.model, &set, &cfg.t_grid, &cfg.x_grid, cfg.window)?;
    if !scan.excluded.is_empty() {
        note(format!("compare: dropped t={:?}, within two grid steps of the start of Lambda", scan.excluded));
    }
    for row in &scan.rows {
        let mut out = vec![num(row.t)];
        out.extend(box_cols(&row.bx));
        out.extend([
            num(row.r),
            num(row.asymptotic.total),
            num(row.asymptotic.cross_term),
            num(row.asymptotic.diagonal_term),
            num(row.empirical.value),
            num(row.empirical.std_error),
            num(row.ratio),
        ]);
        table.push(out);
    }
    for (x, dev) in &scan.max_deviation {
        note(format!("compare: x={x} max |ratio - 1| = {dev:.4}"));
    }
    note(format!("compare: deviation non-increasing in x: {}", scan.shrinking));
    if scan.unreliable {
        note("compare: some cells rest on fewer than 30 hits");
    }
    Ok(table)
}

fn renewal(cfg: &RunConfig) -> Result<Table> {
    let mut table = Table::new(&["t", "lambda", "tilted_h1", "tilted_h2", "tilted_g"]);
    let set = tilted(cfg)?;
    let g = &cfg.model.spec.inter_arrival;
    note(format!("renewal: residual {:.3e}", set.grid.residual()));
    match step_halving_gap(g, cfg.model.horizon, cfg.renewal_step) {
        Ok(gap) => note(format!("renewal: step-halving gap {gap:.3e}")),
        Err(e) => note(format!("renewal: step-halving diagnostic unavailable: {e}")),
    }
    for k in 0..set.grid.len() {
        table.push(vec![
            num(set.grid.time(k)),
            num(set.grid.values()[k]),
            num(set.h1.values[k]),
            num(set.h2.values[k]),
            num(set.g.values[k]),
        ]);
    }
    Ok(table)
}

/// `n` equally spaced points on `[0, t]`.
fn uniform_grid(t: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| t * k as f64 / (n - 1) as f64).collect()
}

fn s_grid(cfg: &RunConfig) -> Vec<f64> {
    if cfg.s_grid.is_empty() {
        uniform_grid(cfg.model.horizon, 50)
    } else {
        cfg.s_grid.clone()
    }
}

fn z_grid(cfg: &RunConfig) -> Vec<f64> {
    if cfg.z_grid.is_empty() {
        vec![0.0, 0.5, 1.0, 2.0, 5.0, 10.0]
    } else {
        cfg.z_grid.clone()
    }
}

fn copula_check(cfg: &RunConfig) -> Result<Table> {
    let mut table = Table::new(&["quantity", "value"]);
    let spec = &cfg.model.spec;
    let c: &Copula = &spec.copula;
    let mut push = |name: &str, v: f64| table.rows.push(vec![name.to_string(), num(v)]);
    push("min_c_volume", c.min_random_volume(cfg.copula_boxes, cfg.model.seed));
    push("boxes", cfg.copula_boxes as f64);
    push("mean_h1", spec.mean_h_check(1));
    push("mean_h2", spec.mean_h_check(2));
    let report = spec.bounds_over_horizon(cfg.model.horizon, &s_grid(cfg), &z_grid(cfg))?;
    for (name, v) in [
        ("b_lo", report.b_lo),
        ("b_hi", report.b_hi),
        ("d_lo", report.d_lo),
        ("d_hi", report.d_hi),
        ("a_lo", report.a_lo),
        ("a_hi", report.a_hi),
        ("c1", report.c1),
        ("c2", report.c2),
        ("c3", report.c3),
    ] {
        push(name, v);
    }
    push("is_copula", f64::from(u8::from(c.is_copula())));
    for v in &report.violations {
        note(format!("copula-check: {v}"));
    }
    Ok(table)
}

fn counterexample(cfg: &RunConfig) -> Result<Table> {
    let mut table = Table::new(&[
        "n",
        "a_n",
        "m_n",
        "b_n",
        "mid_n",
        "ordered",
        "witness",
        "ln_n_plus_1",
        "self_convolution_ratio",
        "i2_over_f",
    ]);
    let n_max = cfg
        .model
        .spec
        .claims
        .iter()
        .find_map(|m| match m {
            Marginal::Counterexample(d) => Some(d.table().n_max()),
            _ => None,
        })
        .unwrap_or(8);
    let density = CounterexampleDensity::with_blocks(n_max)?;
    let t = density.table();
    note(format!(
        "counterexample: normalizer {}, certified tail {:e}, breakpoints ordered: {}",
        density.normalizer(),
        density.tail_bound(),
        t.is_ordered()
    ));
    let opt = |r: Result<f64>| r.map(num).unwrap_or_default();
    for n in 1..=n_max {
        let a = t.a(n);
        let split = density.convolution(a);
        let i2 = split.and_then(|s| Ok(s.i2 / density.density(a)?));
        table.push(vec![
            n.to_string(),
            num(a),
            t.m(n).to_string(),
            num(t.b(n)),
            num(t.mid(n)),
            t.is_ordered().to_string(),
            opt(density.almost_decreasing_witness(n)),
            num(((n + 1) as f64).ln()),
            opt(density.self_convolution_ratio(a)),
            opt(i2),
        ]);
    }
    Ok(table)
}

fn verify_conditions(cfg: &RunConfig) -> Result<Table> {
    let mut table = Table::new(&["condition", "index", "x", "d", "max_deviation"]);
    let spec = &cfg.model.spec;
    let (ss, zs) = (s_grid(cfg), z_grid(cfg));
    let xs = &cfg.x_grid;
    let d = cfg.window[0];
    let mut emit = |cond: &str, idx: &str, vals: Vec<f64>| {
        for (x, v) in xs.iter().zip(vals) {
            table.rows.push(vec![cond.to_string(), idx.to_string(), num(*x), num(d), num(v)]);
        }
    };
    for i in [1, 2] {
        emit("1", &i.to_string(), spec.condition_ratio_scan(i, &ss, xs, d)?);
    }
    emit("2", "12", spec.condition2_ratio_scan(&ss, xs, d)?);
    for i in [1, 2] {
        let label = if i == 1 { "12" } else { "21" };
        emit("3", label, spec.condition3_ratio_scan(i, &ss, &zs, xs, d)?);
    }
    let grid_max = xs.iter().cloned().fold(0.0, f64::max).max(10.0 * d);
    for i in [1usize, 2] {
        let c4 = almost_decreasing_constant(&spec.claims[i - 1], d, grid_max, None)?;
        table.rows.push(vec!["4".into(), i.to_string(), num(grid_max), num(d), num(c4)]);
    }
    let report = spec.bounds_over_horizon(cfg.model.horizon, &ss, &zs)?;
    for v in report.violations.iter().chain(&cfg.warnings) {
        note(format!("verify-conditions: {v}"));
    }
    Ok(table)
}

fn lemma33(cfg: &RunConfig) -> Result<Table> {
    let mut table = Table::new(&[
        "t", "n", "x1", "x2", "d1", "d2", "lhs", "lhs_se", "lhs_hits", "rhs", "rhs_se", "rhs_hits", "ratio", "unreliable",
    ]);
    for &t in &cfg.t_grid {
        for bx in boxes(cfg)? {
            note(format!("lemma33: n={}, t={t}, x={:?}", cfg.lemma33_n, bx.x));
            let l = lemma33_check(&cfg.model, cfg.lemma33_n, t, &bx)?;
            let mut row = vec![num(t), cfg.lemma33_n.to_string()];
            row.extend(box_cols(&bx));
            row.extend([
                num(l.lhs.value),
                num(l.lhs.std_error),
                l.lhs.hits.to_string(),
                num(l.rhs.value),
                num(l.rhs.std_error),
                l.rhs.hits.to_string(),
                num(l.ratio),
                (l.lhs.unreliable || l.rhs.unreliable).to_string(),
            ]);
            table.push(row);
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn cfg(extra: &str) -> RunConfig {
        parse_config(&format!(
            r#"{{
                "model": {{
                    "claims": [{{"type": "pareto", "alpha": 1.0}}, {{"type": "pareto", "alpha": 1.0}}],
                    "inter_arrival": {{"type": "exponential", "rate": 1.0}},
                    "dependence": {{"type": "frank_tri", "gamma": 1.0}},
                    "r": 0.05, "horizon": 2.0, "seed": 5, "n_samples": 20000
                }},
                "renewal_step": 0.01,
                "window": [5.0, 5.0]
                {extra}
            }}"#
        ))
        .unwrap()
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.0, 1.0, 0.1, 1.5e-300, 123456.789, 2f64.powi(64), -3e-7, 1.0 / 3.0] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(num(1e-300), "1e-300");
        assert_eq!(num(0.25), "0.25");
    }

    #[test]
    fn compare_emits_one_row_per_cell() {
        let c = cfg(r#", "grids": {"t": [0.5, 1.0, 2.0], "x": [1.0, 2.0]}"#);
        let t = run(Experiment::Compare, &c).unwrap();
        assert_eq!(t.rows.len(), 6);
        assert_eq!(t.header.len(), 12);
        let ratio = t.column("ratio").unwrap();
        assert!(t.rows.iter().all(|r| r[ratio].parse::<f64>().unwrap().is_finite()));
    }

    #[test]
    fn counterexample_table_covers_eight_blocks() {
        let t = run(Experiment::Counterexample, &cfg("")).unwrap();
        assert_eq!(t.rows.len(), 8);
        assert_eq!(t.rows[0][1], "2");
        assert_eq!(t.rows.iter().map(|r| r[5].as_str()).collect::<Vec<_>>(), vec!["true"; 8]);
    }

    #[test]
    fn renewal_table_spans_the_grid() {
        let t = run(Experiment::Renewal, &cfg("")).unwrap();
        assert_eq!(t.rows.len(), 201);
        assert_eq!(t.header, vec!["t", "lambda", "tilted_h1", "tilted_h2", "tilted_g"]);
        let last: f64 = t.rows[200][1].parse().unwrap();
        assert!((last - 2.0).abs() < 1e-3);
    }

    #[test]
    fn other_experiments_run() {
        let c = cfg(r#", "grids": {"t": [1.0], "x": [10.0, 100.0], "s": [0.5, 1.0]}, "copula_boxes": 1000"#);
        for e in [Experiment::Simulate, Experiment::Asymptotic, Experiment::CopulaCheck, Experiment::VerifyConditions, Experiment::Lemma33] {
            let t = run(e, &c).unwrap();
            assert!(!t.rows.is_empty(), "{e}");
        }
    }
}
