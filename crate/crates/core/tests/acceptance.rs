#![allow(clippy::needless_range_loop)]

//! Acceptance criteria, one line per criterion. Reference values come from
//! the brute-force helpers in `oracle` below, which share no code with the
//! library beyond the matrix type and the seeded generators.

use std::time::Instant;

use rand::Rng as _;
use vonneumann_hierarchy::bbgky::{
    additive_dispersion, average_particle_number, chaos_correlation_expansion, correlation_from_g,
    marginals_from_density, reduce_from_correlations, reduce_from_density, solve_bbgky_cumulant,
    solve_bbgky_iteration, solve_bbgky_state, QuadratureRule, QuadratureSpec,
};
use vonneumann_hierarchy::cumulants::{
    cumulant_generator_fd, cumulant_matrix, recover_group_from_cumulants, scattering_operator_apply,
    CumulantOptions,
};
use vonneumann_hierarchy::evolution::{evolve_density_sequence, group_apply, make_unitary_group};
use vonneumann_hierarchy::hamiltonian::cluster_interaction_apply;
use vonneumann_hierarchy::hierarchy::{
    cluster_invert, nonlinear_generator, solve_chaos, solve_chaos_scattering_form, solve_hierarchy,
};
use vonneumann_hierarchy::partitions::partition_alternating_sum;
use vonneumann_hierarchy::random::{
    random_density, random_fugacity_sequence, random_hermitian, random_hermitian_sequence,
    random_normalized_sequence, random_spec, rng_from_seed,
};
use vonneumann_hierarchy::star_algebra::{
    efg_residual, exp_shift_residual, leibniz_residual, round_trip_residual, star_exp, star_ln, star_product,
    verify_lemma2, verify_lemma3, OperatorSequence,
};
use vonneumann_hierarchy::{
    ClusterSet, CMatrix, CorrelationState, DensityState, Dynamics, ManyBodyOperator, ParticleSet, SystemSpec, C64,
};

mod oracle {
    use super::*;

    pub fn digits(mut idx: usize, n: usize, d: usize) -> Vec<usize> {
        let mut out = vec![0; n];
        for slot in (0..n).rev() {
            out[slot] = idx % d;
            idx /= d;
        }
        out
    }

    fn index(digs: impl Iterator<Item = usize>, d: usize) -> usize {
        digs.fold(0, |acc, x| acc * d + x)
    }

    /// Product of operators placed on disjoint slot lists; identity elsewhere.
    pub fn embed(parts: &[(&CMatrix, &[usize])], n: usize, d: usize) -> CMatrix {
        let dim = d.pow(n as u32);
        let mut covered = vec![false; n];
        for (_, slots) in parts {
            for &s in *slots {
                covered[s] = true;
            }
        }
        let digs: Vec<Vec<usize>> = (0..dim).map(|i| digits(i, n, d)).collect();
        CMatrix::from_fn(dim, dim, |a, b| {
            let (da, db) = (&digs[a], &digs[b]);
            if (0..n).any(|j| !covered[j] && da[j] != db[j]) {
                return C64::new(0.0, 0.0);
            }
            parts.iter().fold(C64::new(1.0, 0.0), |acc, (m, slots)| {
                acc * m[(index(slots.iter().map(|&s| da[s]), d), index(slots.iter().map(|&s| db[s]), d))]
            })
        })
    }

    pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
        (0u32..1 << n)
            .filter(|m| m.count_ones() as usize == k)
            .map(|m| (0..n).filter(|i| m & (1 << i) != 0).collect())
            .collect()
    }

    /// Sum of potentials over slot subsets accepted by `keep`.
    pub fn potentials(spec: &SystemSpec, n: usize, keep: impl Fn(&[usize]) -> bool) -> CMatrix {
        let d = spec.dim_single();
        let mut v = CMatrix::zeros(d.pow(n as u32), d.pow(n as u32));
        for (&k, phi) in spec.potentials() {
            for s in subsets(n, k).iter().filter(|s| keep(s)) {
                v += embed(&[(phi, s)], n, d);
            }
        }
        v
    }

    pub fn hamiltonian(spec: &SystemSpec, n: usize) -> CMatrix {
        let d = spec.dim_single();
        let mut h = potentials(spec, n, |_| true);
        for i in 0..n {
            h += embed(&[(spec.one_body(), &[i])], n, d);
        }
        h
    }

    pub fn propagator(spec: &SystemSpec, n: usize, t: f64) -> CMatrix {
        (hamiltonian(spec, n) * C64::new(0.0, -t / spec.hbar())).exp()
    }

    /// Blocks evolve independently: `U f U†` with `U` the product of block
    /// propagators.
    pub fn evolve_blocks(spec: &SystemSpec, blocks: &[Vec<usize>], n: usize, t: f64, f: &CMatrix) -> CMatrix {
        let props: Vec<CMatrix> = blocks.iter().map(|b| propagator(spec, b.len(), t)).collect();
        let parts: Vec<(&CMatrix, &[usize])> = props.iter().zip(blocks).map(|(u, b)| (u, b.as_slice())).collect();
        let u = embed(&parts, n, spec.dim_single());
        &u * f * u.adjoint()
    }

    pub fn evolve(spec: &SystemSpec, n: usize, t: f64, f: &CMatrix) -> CMatrix {
        evolve_blocks(spec, &[(0..n).collect()], n, t, f)
    }

    /// Set partitions of `0..n` as lists of blocks.
    pub fn partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in partitions(n - 1) {
            for i in 0..p.len() {
                let mut q = p.clone();
                q[i].push(n - 1);
                out.push(q);
            }
            let mut q = p;
            q.push(vec![n - 1]);
            out.push(q);
        }
        out
    }

    pub fn mobius(k: usize) -> f64 {
        let f: f64 = (1..k).map(|i| i as f64).product();
        if k % 2 == 1 { f } else { -f }
    }

    /// `Σ_P w(|P|) Π_b comps[|b|](b)` for each n in `1..=n_max`; `comps[0]`
    /// is unused.
    fn partition_sum(comps: &[CMatrix], n_max: usize, d: usize, w: impl Fn(usize) -> f64) -> Vec<CMatrix> {
        let mut out = vec![CMatrix::from_element(1, 1, C64::new(1.0, 0.0))];
        for n in 1..=n_max {
            let mut acc = CMatrix::zeros(d.pow(n as u32), d.pow(n as u32));
            for p in partitions(n) {
                let parts: Vec<(&CMatrix, &[usize])> = p.iter().map(|b| (&comps[b.len()], b.as_slice())).collect();
                acc += embed(&parts, n, d) * C64::new(w(p.len()), 0.0);
            }
            out.push(acc);
        }
        out
    }

    /// Densities from correlations: sums over partitions of block products.
    pub fn expand(g: &[CMatrix], n_max: usize, d: usize) -> Vec<CMatrix> {
        partition_sum(g, n_max, d, |_| 1.0)
    }

    /// Correlations from densities (or marginals): Möbius-weighted sums.
    pub fn invert(dens: &[CMatrix], n_max: usize, d: usize) -> Vec<CMatrix> {
        let mut g = partition_sum(dens, n_max, d, mobius);
        g[0] = CMatrix::zeros(1, 1);
        g
    }

    /// Trace over the last `k` of `n` slots.
    pub fn trace_last(m: &CMatrix, n: usize, k: usize, d: usize) -> CMatrix {
        let keep = d.pow((n - k) as u32);
        let tr = d.pow(k as u32);
        CMatrix::from_fn(keep, keep, |a, b| (0..tr).map(|j| m[(a * tr + j, b * tr + j)]).sum())
    }

    pub fn factorial(n: usize) -> f64 {
        (1..=n).map(|i| i as f64).product()
    }

    /// Reduced operators `F_s` of a density sequence, normalized by the
    /// partition function.
    pub fn marginals(dens: &[CMatrix], d: usize) -> Vec<CMatrix> {
        let n_max = dens.len() - 1;
        let z: f64 = (0..=n_max).map(|n| dens[n].trace().re / factorial(n)).sum();
        (0..=n_max)
            .map(|s| {
                let mut acc = CMatrix::zeros(d.pow(s as u32), d.pow(s as u32));
                for n in 0..=n_max - s {
                    acc += trace_last(&dens[s + n], s + n, n, d) / C64::new(factorial(n), 0.0);
                }
                acc / C64::new(z, 0.0)
            })
            .collect()
    }

    pub fn evolve_all(spec: &SystemSpec, dens: &[CMatrix], t: f64) -> Vec<CMatrix> {
        dens.iter().enumerate().map(|(n, m)| if n == 0 { m.clone() } else { evolve(spec, n, t, m) }).collect()
    }

    /// Exact correlations at time `t`: expand, evolve every component, invert.
    pub fn solution(spec: &SystemSpec, g0: &[CMatrix], t: f64) -> Vec<CMatrix> {
        let n_max = g0.len() - 1;
        let d = spec.dim_single();
        invert(&evolve_all(spec, &expand(g0, n_max, d), t), n_max, d)
    }

    pub fn trace_norm(m: &CMatrix) -> f64 {
        m.clone().svd(false, false).singular_values.iter().sum()
    }

    pub fn diff(a: &CMatrix, b: &CMatrix) -> f64 {
        trace_norm(&(a - b))
    }

    pub fn max_abs(m: &CMatrix) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Mobius cumulant over singletons: `Σ_P μ(|P|) 𝒢_P f`.
    pub fn singleton_cumulant(spec: &SystemSpec, n: usize, t: f64, f: &CMatrix) -> CMatrix {
        let mut acc = CMatrix::zeros(f.nrows(), f.ncols());
        for p in partitions(n) {
            acc += evolve_blocks(spec, &p, n, t, f) * C64::new(mobius(p.len()), 0.0);
        }
        acc
    }

    /// `(f ⋆ h)_n = Σ_{Z ⊆ 0..n} f_{|Z|}(Z) h_{n−|Z|}(complement)`.
    pub fn star_product(f: &[CMatrix], h: &[CMatrix], d: usize) -> Vec<CMatrix> {
        let n_max = f.len() - 1;
        (0..=n_max)
            .map(|n| {
                let mut acc = CMatrix::zeros(d.pow(n as u32), d.pow(n as u32));
                for k in 0..=n {
                    for z in subsets(n, k) {
                        let rest: Vec<usize> = (0..n).filter(|i| !z.contains(i)).collect();
                        let fz = if k == 0 { None } else { Some(embed(&[(&f[k], &z)], n, d)) };
                        let hr = if k == n { None } else { Some(embed(&[(&h[n - k], &rest)], n, d)) };
                        acc += match (fz, hr) {
                            (Some(a), Some(b)) => a * b,
                            (Some(a), None) => a * h[0][(0, 0)],
                            (None, Some(b)) => b * f[0][(0, 0)],
                            (None, None) => CMatrix::from_element(1, 1, f[0][(0, 0)] * h[0][(0, 0)]),
                        };
                    }
                }
                acc
            })
            .collect()
    }
}

use oracle::{diff, max_abs};

fn comps(seq: &OperatorSequence) -> Vec<CMatrix> {
    seq.components().to_vec()
}

/// Worst residual against its tolerance, or a failure found on the way.
struct Outcome {
    worst: f64,
    tol: f64,
    notes: Vec<String>,
}

impl Outcome {
    fn new(tol: f64) -> Self {
        Self { worst: 0.0, tol, notes: Vec::new() }
    }

    fn residual(&mut self, what: &str, r: f64) {
        if r.is_nan() || r > self.tol {
            self.notes.push(format!("{what}: {r:e}"));
        }
        if r.is_nan() || r > self.worst {
            self.worst = r;
        }
    }

    fn require(&mut self, what: &str, ok: bool) {
        if !ok {
            self.notes.push(what.to_string());
        }
    }

    fn pass(&self) -> bool {
        self.notes.is_empty()
    }
}

type Check = fn() -> Result<Outcome, vonneumann_hierarchy::Error>;

fn spec_kk(seed: u64) -> SystemSpec {
    random_spec(seed, 2, &[2, 3], 1.0).unwrap()
}

fn stirling() -> Result<Outcome, vonneumann_hierarchy::Error> {
    let mut out = Outcome::new(0.0);
    // Stirling numbers of the second kind by recurrence
    let mut s = vec![vec![0i128; 13]; 13];
    s[0][0] = 1;
    for n in 1..=12 {
        for k in 1..=n {
            s[n][k] = k as i128 * s[n - 1][k] + s[n - 1][k - 1];
        }
    }
    for n in 1..=12usize {
        let expect = i64::from(n == 1);
        let independent: i128 = (1..=n)
            .map(|k| {
                let f: i128 = (1..k as i128).product();
                if k % 2 == 1 { f * s[n][k] } else { -f * s[n][k] }
            })
            .sum();
        let got = partition_alternating_sum(n)?;
        out.residual(&format!("n={n}"), (got - expect).abs() as f64);
        out.require(&format!("recurrence n={n}"), independent == expect as i128);
    }
    Ok(out)
}

fn cumulant_inversion() -> Result<Outcome, vonneumann_hierarchy::Error> {
    let mut out = Outcome::new(1e-9);
    let spec = spec_kk(11);
    let dy = Dynamics::new(spec.clone());
    let mut rng = rng_from_seed(12);
    for n in 1..=3 {
        let labels = ParticleSet::range(n);
        let f = ManyBodyOperator::new(labels.clone(), 2, random_hermitian(&mut rng, 1 << n))?;
        let ug = make_unitary_group(&spec, &labels)?;
        for t in [0.3, 1.0] {
            let exact = oracle::evolve(&spec, n, t, f.matrix());
            let rec = recover_group_from_cumulants(&dy, t, &labels, &f)?;
            out.residual(&format!("n={n},t={t} vs oracle"), diff(rec.matrix(), &exact));
            out.residual(&format!("n={n},t={t} vs group"), diff(rec.matrix(), group_apply(&ug, t, &f)?.matrix()));
        }
    }
    Ok(out)
}

fn free_vanishing() -> Result<Outcome, vonneumann_hierarchy::Error> {
    let mut out = Outcome::new(1e-11);
    let spec = spec_kk(21).without_interaction();
    let dy = Dynamics::new(spec.clone());
    let mut rng = rng_from_seed(22);
    for n in [2, 3] {
        let f = random_hermitian(&mut rng, 1 << n);
        let singletons: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for t in [0.5, 2.0] {
            let lib = cumulant_matrix(&dy, t, &singletons, &f, CumulantOptions::default())?;
            out.residual(&format!("n={n},t={t}"), oracle::trace_norm(&lib));
            out.residual(&format!("oracle n={n},t={t}"), oracle::trace_norm(&oracle::singleton_cumulant(&spec, n, t, &f)));
        }
    }
    Ok(out)
}

fn hierarchy_oracle() -> Result<Outcome, vonneumann_hierarchy::Error> {
    let mut out = Outcome::new(1e-9);
    for i in 0..20u64 {
        let spec = spec_kk(100 + i);
        let dy = Dynamics::new(spec.clone());
        let g0 = CorrelationState::new(random_hermitian_sequence(&mut rng_from_seed(200 + i), 2, 3, 0.5)?)?;
        for t in [0.1, 0.5, 1.0] {
            let lib = solve_hierarchy(&dy, &g0, t)?;
            let exact = oracle::solution(&spec, &comps(g0.seq()), t);
            for n in 1..=3 {
                out.residual(&format!("scenario {i}, n={n}, t={t}"), diff(lib.component(n), &exact[n]));
            }
        }
    }
    Ok(out)
}

fn group_property() -> Result<Outcome, vonneumann_hierarchy::Error> {
    let mut out = Outcome::new(1e-9);
    let dy = Dynamics::new(spec_kk(31));
    let mut rng = rng_from_seed(32);
    let g = CorrelationState::new(random_hermitian_sequence(&mut rng, 2, 3, 0.5)?)?;
    for i in 0..10 {
        let (t1, t2) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let direct = solve_hierarchy(&dy, &g, t1 + t2)?;
        let composed = solve_hierarchy(&dy, &solve_hierarchy(&dy, &g, t2)?, t1)?;
        for n in 1..=3 {
            out.residual(&format!("pair {i}, n={n}"), diff(composed.component(n), direct.component(n)));
        }
    }
    let at_zero = solve_hierarchy(&dy, &g, 0.0)?;
    out.require("zero-time solution is the initial state", at_zero == g);
    Ok(out)
}

fn generators() -> Result<Outcome, vonneumann_hierarchy::Error> {
    let mut out = Outcome::new(5e-7);
    let spec = spec_kk(41);
    let dy = Dynamics::new(spec.clone());
    let mut rng = rng_from_seed(42);
    let h = 1e-4;
    let cd = |p: &CMatrix, m: &CMatrix| (p - m) / C64::new(2.0 * h, 0.0);
    let i_hbar = C64::new(0.0, 1.0 / spec.hbar());
    let labels = ParticleSet::range(3);
    let rho = random_density(&mut rng, 3, 2, 1.0, false);
    let rho_op = ManyBodyOperator::new(labels.clone(), 2, rho.clone())?;

    // (a) group generator: the von Neumann commutator
    let hm = oracle::hamiltonian(&spec, 3);
    let fd = cd(&dy.evolve(h, 3, &rho)?, &dy.evolve(-h, 3, &rho)?);
    out.residual("group generator", max_abs(&(fd - (&rho * &hm - &hm * &rho) * i_hbar)));

    // (b) nonlinear generator against differences of the solution
    let g = cluster_invert(&DensityState::new(random_fugacity_sequence(&mut rng, 2, 3, 1.0)?)?)?;
    let gen = nonlinear_generator(&dy, &g)?;
    let (p, m) = (solve_hierarchy(&dy, &g, h)?, solve_hierarchy(&dy, &g, -h)?);
    for n in 1..=3 {
        out.residual(&format!("hierarchy generator n={n}"), max_abs(&(cd(p.component(n), m.component(n)) - gen.component(n))));
    }

    // (c) cumulant generator: potentials coupling every cluster
    let ps = |v: &[u32]| ParticleSet::new(v.to_vec()).unwrap();
    let cases: [(Vec<Vec<usize>>, ClusterSet); 2] = [
        (vec![vec![0], vec![1, 2]], ClusterSet::new(vec![ps(&[1]), ps(&[2, 3])])?),
        (vec![vec![0], vec![1], vec![2]], ClusterSet::singletons(&labels)),
    ];
    for (slots, clusters) in &cases {
        let v = oracle::potentials(&spec, 3, |s| slots.iter().all(|c| c.iter().any(|i| s.contains(i))));
        let expect = (&rho * &v - &v * &rho) * i_hbar;
        let fd = cumulant_generator_fd(&dy, clusters, &rho_op, h)?;
        out.residual(&format!("cumulant generator {slots:?}"), max_abs(&(fd.matrix() - &expect)));
        let lib = cluster_interaction_apply(clusters, &rho_op, &spec)?;
        out.residual(&format!("cluster interaction {slots:?}"), max_abs(&(lib.matrix() - &expect)));
    }

    // (d) scattering operator: generated by the full interaction
    let v = oracle::potentials(&spec, 3, |_| true);
    let fd = cd(
        scattering_operator_apply(&dy, h, &labels, &rho_op)?.matrix(),
        scattering_operator_apply(&dy, -h, &labels, &rho_op)?.matrix(),
    );
    out.residual("scattering generator", max_abs(&(fd - (&rho * &v - &v * &rho) * i_hbar)));
    Ok(out)
}

fn growth_bound() -> Result<Outcome, vonneumann_hierarchy::Error> {
    let mut out = Outcome::new(1.0);
    let spec = spec_kk(51);
    let mut rng = rng_from_seed(52);
    let e = std::f64::consts::E;
    for i in 0..50 {
        let norm = rng.random_range(1.0..3.0);
        let t = rng.random_range(-2.0..2.0);
        let g0 = comps(&random_normalized_sequence(&mut rng, 2, 4, norm)?);
        let gt = oracle::solution(&spec, &g0, t);
        let mut c: f64 = 0.0;
        for n in 1..=4 {
            c = c.max(oracle::trace_norm(&g0[n]));
            let rhs = oracle::factorial(n) * e.powi(2 * n as i32 + 1) * c.powi(n as i32);
            out.residual(&format!("state {i}, n={n}: lhs/rhs"), oracle::trace_norm(&gt[n]) / rhs);
        }
    }
    Ok(out)
}

fn star_lemmas() -> Result<Outcome, vonneumann_hierarchy::Error> {
    let mut out = Outcome::new(1e-10);
    let mut rng = rng_from_seed(61);
    let f = random_normalized_sequence(&mut rng, 2, 3, 1.0)?;
    let h = random_normalized_sequence(&mut rng, 2, 3, 1.0)?;
    let mut unit_f = f.clone();
    unit_f.set_scalar0(C64::new(1.0, 0.0));

    let lib = star_product(&unit_f, &h)?;
    let expect = oracle::star_product(&comps(&unit_f), &comps(&h), 2);
    for n in 0..=3 {
        out.residual(&format!("product n={n}"), diff(lib.component(n), &expect[n]));
    }
    let exp_lib = star_exp(&f)?;
    let exp_oracle = oracle::expand(&comps(&f), 3, 2);
    for n in 1..=3 {
        out.residual(&format!("exponential n={n}"), diff(exp_lib.component(n), &exp_oracle[n]));
    }
    let ln = star_ln(&exp_lib)?;
    for n in 1..=3 {
        out.residual(&format!("logarithm n={n}"), diff(ln.component(n), f.component(n)));
    }
    out.residual("round trip", round_trip_residual(&f)?);
    out.residual("Leibniz", leibniz_residual(&f, &h)?);
    out.residual("shift of exponential", exp_shift_residual(&f, 5)?);
    out.residual("factorized reduction", efg_residual(&f, &h)?);
    let small = random_normalized_sequence(&mut rng, 2, 3, 0.01)?;
    for s in 1..=2 {
        out.residual(&format!("cluster reduction s={s}"), verify_lemma2(&small, s, 9)?.residual);
    }
    out.residual("normalized reduction", verify_lemma3(&small, 3, 9)?.residual);
    Ok(out)
}

fn bbgky_triangle() -> Result<Outcome, vonneumann_hierarchy::Error> {
    let mut out = Outcome::new(1e-9);
    let spec = spec_kk(71);
    let dy = Dynamics::new(spec.clone());
    let dens = DensityState::new(random_fugacity_sequence(&mut rng_from_seed(72), 2, 3, 0.02)?)?;
    let g0 = cluster_invert(&DensityState::new(dens.seq().with_cutoff(5)?)?)?;
    let f0 = marginals_from_density(&dens)?;
    let n0 = oracle::marginals(&comps(dens.seq()), 2)[1].trace().re;
    for t in [0.2, 0.8] {
        let exact = oracle::marginals(&oracle::evolve_all(&spec, &comps(dens.seq()), t), 2);
        let dt = DensityState::new(evolve_density_sequence(&dy, dens.seq(), t)?)?;
        let gt = solve_hierarchy(&dy, &g0, t)?;
        for s in [1, 2] {
            let a = reduce_from_density(&dt, s)?;
            let b = solve_bbgky_cumulant(&dy, &f0, s, t)?;
            let c = reduce_from_correlations(&gt, s)?;
            out.residual(&format!("density route s={s},t={t}"), diff(a.matrix(), &exact[s]));
            out.residual(&format!("cumulant route s={s},t={t}"), diff(b.matrix(), &exact[s]));
            out.residual(&format!("correlation route s={s},t={t}"), diff(c.matrix(), &exact[s]));
            out.residual(&format!("density-cumulant s={s},t={t}"), diff(a.matrix(), b.matrix()));
            out.residual(&format!("cumulant-correlation s={s},t={t}"), diff(b.matrix(), c.matrix()));
            out.residual(&format!("density-correlation s={s},t={t}"), diff(a.matrix(), c.matrix()));
        }
        let nt = average_particle_number(&solve_bbgky_state(&dy, &f0, t)?)?.value;
        let r = (nt - n0).abs();
        out.require(&format!("particle number at t={t} drifts by {r:e}"), r <= 1e-10);
    }
    Ok(out)
}

fn iteration() -> Result<Outcome, vonneumann_hierarchy::Error> {
    let mut out = Outcome::new(1e-5);
    let spec = random_spec(81, 2, &[2], 1.0)?;
    let dy = Dynamics::new(spec.clone());
    let dens = DensityState::new(random_fugacity_sequence(&mut rng_from_seed(82), 2, 3, 0.3)?)?;
    let f0 = marginals_from_density(&dens)?;
    let t = 0.2;
    let exact = &oracle::marginals(&oracle::evolve_all(&spec, &comps(dens.seq()), t), 2)[1];
    let mut errs = Vec::new();
    for nodes in [8, 16, 32] {
        let q = QuadratureSpec { order: 2, nodes_per_dim: nodes, rule: QuadratureRule::NestedTrapezoid };
        errs.push(diff(solve_bbgky_iteration(&dy, &f0, 1, t, &q)?.value.matrix(), exact));
    }
    out.residual("32 nodes", errs[2]);
    out.require(&format!("error decreases under refinement: {errs:?}"), errs[1] < errs[0] && errs[2] < errs[1]);
    Ok(out)
}

fn correlations() -> Result<Outcome, vonneumann_hierarchy::Error> {
    let mut out = Outcome::new(1e-9);
    let spec = spec_kk(91);
    let dy = Dynamics::new(spec.clone());
    let mut rng = rng_from_seed(92);
    let dens = DensityState::new(random_fugacity_sequence(&mut rng, 2, 3, 0.02)?)?;
    let g0 = cluster_invert(&DensityState::new(dens.seq().with_cutoff(5)?)?)?;
    let t = 0.5;
    let dt_oracle = oracle::evolve_all(&spec, &comps(dens.seq()), t);
    let f = oracle::marginals(&dt_oracle, 2);

    // pair correlation F₂ − F₁⊗F₁ against the e^𝔞 g route
    let pair = &f[2] - oracle::embed(&[(&f[1], &[0]), (&f[1], &[1])], 2, 2);
    let lib = correlation_from_g(&solve_hierarchy(&dy, &g0, t)?, 2)?;
    out.residual("pair correlation", diff(lib.matrix(), &pair));

    // dispersion against the second moment of Σ_i A_i
    let a = random_hermitian(&mut rng, 2);
    let z: f64 = (0..=3).map(|n| dt_oracle[n].trace().re / oracle::factorial(n)).sum();
    let (mut m1, mut m2) = (0.0, 0.0);
    for n in 1..=3 {
        let mut total = CMatrix::zeros(1 << n, 1 << n);
        for i in 0..n {
            total += oracle::embed(&[(&a, &[i])], n, 2);
        }
        m1 += (&total * &dt_oracle[n]).trace().re / oracle::factorial(n) / z;
        m2 += (&total * &total * &dt_oracle[n]).trace().re / oracle::factorial(n) / z;
    }
    let dt = DensityState::new(evolve_density_sequence(&dy, dens.seq(), t)?)?;
    let disp = additive_dispersion(&a, &marginals_from_density(&dt)?)?;
    out.residual("dispersion", (disp - (m2 - m1 * m1)).abs());

    // correlations of chaos data from the cumulant expansion
    let g1 = random_density(&mut rng, 1, 2, 0.02, false);
    let chaos: Vec<CMatrix> = std::iter::once(CMatrix::zeros(1, 1))
        .chain(std::iter::once(g1.clone()))
        .chain((2..=5).map(|n| CMatrix::zeros(1 << n, 1 << n)))
        .collect();
    let fc = oracle::marginals(&oracle::evolve_all(&spec, &oracle::expand(&chaos, 5, 2), t), 2);
    let gc = oracle::invert(&fc, 2, 2);
    for s in 1..=2 {
        let lib = chaos_correlation_expansion(&dy, &g1, s, t, 5)?;
        out.residual(&format!("chaos expansion s={s}"), diff(lib.matrix(), &gc[s]));
    }
    Ok(out)
}

fn chaos() -> Result<Outcome, vonneumann_hierarchy::Error> {
    let mut out = Outcome::new(1e-9);
    let spec = spec_kk(101);
    let free = spec.without_interaction();
    let g1 = random_density(&mut rng_from_seed(102), 1, 2, 1.0, false);
    let chaos: Vec<CMatrix> = vec![CMatrix::zeros(1, 1), g1.clone(), CMatrix::zeros(4, 4), CMatrix::zeros(8, 8)];
    for t in [0.5, 1.0] {
        let exact = oracle::solution(&spec, &chaos, t);
        let exact_free = oracle::solution(&free, &chaos, t);
        let (dy, dy_free) = (Dynamics::new(spec.clone()), Dynamics::new(free.clone()));
        for n in 1..=3 {
            let a = solve_chaos(&dy, &g1, n, t)?;
            let b = solve_chaos_scattering_form(&dy, &g1, n, t)?;
            out.residual(&format!("forms n={n},t={t}"), diff(a.matrix(), b.matrix()));
            out.residual(&format!("cumulant vs oracle n={n},t={t}"), diff(a.matrix(), &exact[n]));
            if n >= 2 {
                let created = oracle::trace_norm(a.matrix());
                out.require(&format!("correlations created n={n},t={t}: {created:e}"), created >= 1e-6);
                let lib_free = oracle::trace_norm(solve_chaos(&dy_free, &g1, n, t)?.matrix());
                let oracle_free = oracle::trace_norm(&exact_free[n]);
                out.require(
                    &format!("free n={n},t={t}: {lib_free:e} / {oracle_free:e}"),
                    lib_free <= 1e-11 && oracle_free <= 1e-11,
                );
            }
        }
    }
    Ok(out)
}

fn main() {
    let criteria: [(&str, Check, Option<f64>); 12] = [
        ("Stirling identity", stirling, Some(5.0)),
        ("cumulant inversion", cumulant_inversion, Some(10.0)),
        ("free-system vanishing", free_vanishing, None),
        ("hierarchy vs oracle", hierarchy_oracle, Some(60.0)),
        ("group property", group_property, None),
        ("generators", generators, None),
        ("growth bound", growth_bound, None),
        ("star-algebra lemmas", star_lemmas, None),
        ("BBGKY triangle", bbgky_triangle, None),
        ("iteration series", iteration, None),
        ("correlation operators", correlations, None),
        ("chaos property", chaos, None),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        let (pass, summary) = match result {
            Ok(mut o) => {
                if let Some(b) = budget {
                    o.require(&format!("runtime {secs:.2}s over {b}s"), secs < *b);
                }
                let mut s = format!("worst {:.3e} (tol {:.0e})", o.worst, o.tol);
                if !o.pass() {
                    s.push_str(&format!("; {}", o.notes.join("; ")));
                }
                (o.pass(), s)
            }
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!("{} criterion {:>2} {name}: {summary} [{secs:.2}s]", if pass { "PASS" } else { "FAIL" }, i + 1);
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
