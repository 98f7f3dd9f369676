//! Alternating least squares for full and masked CPD objectives.
//!
//! Each factor row is updated by a damped least-squares solve
//! `(G + λI) a = r + λ a_old` with `λ = 1e-10 · mean(diag G)`. Centering the
//! damping on the previous row keeps every sweep monotone in the objective
//! while still regularizing rank-deficient Gram matrices.
//!
//! With `FitOptions::ridge > 0` the objective gains `μ (‖A‖² + ‖B‖² + ‖C‖²)`
//! with `μ = ridge · ‖X_obs‖_F^{4/3}`, so the penalty rescales with the data
//! exactly like the residual term. Each row solve then minimizes the
//! penalized objective and the trace records it.
//!
//! Under a mask, row `n` of a mode only sees its observed entries. Rows whose
//! observed index sets coincide share one Gram matrix and one factorization;
//! structured (slab or fiber) masks produce only a handful of distinct sets.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cpd::seed::{complete_blocks, SeedBlock};
use crate::cpd::{CpdFactors, FitError, FitOptions, FitResult, InitStrategy};
use crate::scalar::Scalar;
use crate::tensor::{damp_diagonal, Cholesky, Dims, MaskTensor, Matrix, Tensor3};

const DAMPING: f64 = 1e-10;

/// Factor indices feeding the Khatri-Rao design of each mode.
const OTHERS: [(usize, usize); 3] = [(1, 2), (0, 2), (0, 1)];

trait Engine<T: Scalar> {
    fn dims(&self) -> Dims;
    fn observed_norm_sq(&self) -> T;
    fn observed_count(&self) -> usize;
    fn undetermined(&self) -> [Vec<usize>; 3];
    fn objective(&self, f: &[Matrix<T>; 3]) -> T;
    fn update(&self, f: &mut [Matrix<T>; 3], mode: usize, mu: T);

    fn seed_blocks(&self) -> &[SeedBlock<T>] {
        &[]
    }
}

/// Fits a rank-`rank` CPD to a fully observed tensor.
pub fn als_fit<T: Scalar>(x: &Tensor3<T>, rank: usize, opts: &FitOptions) -> Result<FitResult<T>, FitError> {
    if !x.is_finite() {
        return Err(FitError::NonFiniteInput);
    }
    run(&FullEngine::new(x), rank, opts, None)
}

/// Continues full-data ALS from the given factors (a single start; `restarts`
/// is ignored).
pub fn als_fit_from<T: Scalar>(
    x: &Tensor3<T>,
    init: CpdFactors<T>,
    opts: &FitOptions,
) -> Result<FitResult<T>, FitError> {
    if !x.is_finite() {
        return Err(FitError::NonFiniteInput);
    }
    check_init_dims(&init, x.dims())?;
    run(&FullEngine::new(x), init.rank(), opts, Some(init))
}

/// Fits a rank-`rank` CPD to the entries of `x` where `mask` is set, leaving
/// unobserved entries unread.
pub fn masked_als_fit<T: Scalar>(
    x: &Tensor3<T>,
    mask: &MaskTensor,
    rank: usize,
    opts: &FitOptions,
) -> Result<FitResult<T>, FitError> {
    run(&MaskedEngine::new(x, mask, rank, opts.init)?, rank, opts, None)
}

/// Masked ALS continued from the given factors.
pub fn masked_als_fit_from<T: Scalar>(
    x: &Tensor3<T>,
    mask: &MaskTensor,
    init: CpdFactors<T>,
    opts: &FitOptions,
) -> Result<FitResult<T>, FitError> {
    check_init_dims(&init, x.dims())?;
    run(&MaskedEngine::new(x, mask, init.rank(), InitStrategy::Random)?, init.rank(), opts, Some(init))
}

fn check_init_dims<T: Scalar>(init: &CpdFactors<T>, dims: Dims) -> Result<(), FitError> {
    if init.dims() != dims {
        return Err(FitError::Shape(format!("initial factors are {:?}, tensor is {:?}", init.dims(), dims)));
    }
    Ok(())
}

struct Restart<T> {
    factors: [Matrix<T>; 3],
    trace: Vec<T>,
    converged: bool,
}

fn run<T: Scalar, E: Engine<T>>(
    engine: &E,
    rank: usize,
    opts: &FitOptions,
    init: Option<CpdFactors<T>>,
) -> Result<FitResult<T>, FitError> {
    if rank == 0 {
        return Err(FitError::ZeroRank);
    }
    opts.validate()?;
    let undetermined = engine.undetermined();
    let scale = opts.init_scale.map(T::of).unwrap_or_else(|| default_init_scale(engine));

    let starts: Vec<[Matrix<T>; 3]> = match init {
        Some(f) => vec![f.into_parts()],
        None => (0..opts.restarts)
            .map(|r| match engine.seed_blocks() {
                [] => random_factors(engine.dims(), rank, scale, opts.seed, r as u64),
                blocks => seed_from_block(&blocks[r % blocks.len()], engine.dims(), rank, opts, r as u64),
            })
            .collect(),
    };

    let mut best: Option<(usize, Restart<T>)> = None;
    let mut restart_objectives = Vec::with_capacity(starts.len());
    for (index, mut factors) in starts.into_iter().enumerate() {
        for (m, rows) in undetermined.iter().enumerate() {
            for &r in rows {
                factors[m].row_mut(r).fill(T::zero());
            }
        }
        let restart = sweep_until_done(engine, factors, opts);
        let obj = *restart.trace.last().expect("nonempty trace");
        restart_objectives.push(obj);
        let better = match &best {
            None => true,
            Some((_, b)) => obj < *b.trace.last().expect("nonempty trace"),
        };
        if better {
            best = Some((index, restart));
        }
    }

    let (restart_index, restart) = best.expect("at least one restart");
    if restart.factors.iter().any(|m| m.as_slice().iter().any(|v| !v.is_finite())) {
        return Err(FitError::Diverged);
    }
    let mut factors = CpdFactors::from_parts(restart.factors);
    factors.normalize();
    Ok(FitResult {
        factors,
        sweeps_used: restart.trace.len() - 1,
        objective_trace: restart.trace,
        converged: restart.converged,
        restart_index,
        restart_objectives,
        undetermined,
    })
}

fn sweep_until_done<T: Scalar, E: Engine<T>>(engine: &E, mut factors: [Matrix<T>; 3], opts: &FitOptions) -> Restart<T> {
    let floor = {
        let e = T::of(64.0) * T::epsilon();
        e * e * engine.observed_norm_sq()
    };
    let rel_tol = T::of(opts.rel_tol);
    let mu = ridge_weight(engine, opts);
    let objective = |f: &[Matrix<T>; 3]| {
        let data = engine.objective(f);
        if mu > T::zero() {
            data + mu * f.iter().map(|m| m.as_slice().iter().map(|&v| v * v).sum::<T>()).sum::<T>()
        } else {
            data
        }
    };
    let mut prev = objective(&factors);
    let mut trace = vec![prev];
    if prev <= floor {
        return Restart { factors, trace, converged: true };
    }
    let mut converged = false;
    for sweep in 0..opts.max_sweeps {
        let saved = factors.clone();
        for mode in 0..3 {
            engine.update(&mut factors, mode, mu);
        }
        let mut obj = objective(&factors);
        if sweep > 0 && obj.is_finite() {
            // Extrapolate along the sweep direction; kept only if it helps.
            let step = T::of(((sweep + 1) as f64).cbrt() - 1.0);
            let jumped: [Matrix<T>; 3] = std::array::from_fn(|m| {
                let data = factors[m].as_slice().iter().zip(saved[m].as_slice()).map(|(&n, &o)| n + step * (n - o)).collect();
                Matrix::from_row_major(factors[m].rows(), factors[m].cols(), data).expect("same shape")
            });
            let jumped_obj = objective(&jumped);
            if jumped_obj < obj {
                factors = jumped;
                obj = jumped_obj;
            }
        }
        if !obj.is_finite() || obj > prev {
            // Rounding-level increases mean the iteration has stalled at a
            // stationary point; anything larger is a failure.
            converged = obj.is_finite() && obj <= prev + prev * T::of(1e-9);
            factors = saved;
            break;
        }
        trace.push(obj);
        if obj <= floor || prev - obj <= rel_tol * prev {
            converged = true;
            break;
        }
        prev = obj;
    }
    Restart { factors, trace, converged }
}

fn ridge_weight<T: Scalar, E: Engine<T>>(engine: &E, opts: &FitOptions) -> T {
    if opts.ridge > 0.0 {
        T::of(opts.ridge) * engine.observed_norm_sq().powf(T::of(2.0 / 3.0))
    } else {
        T::zero()
    }
}

/// Full-data ALS on a complete block, embedded into zero factors.
fn seed_from_block<T: Scalar>(block: &SeedBlock<T>, dims: Dims, rank: usize, opts: &FitOptions, restart: u64) -> [Matrix<T>; 3] {
    let sub = FullEngine::new(&block.sub);
    let scale = opts.init_scale.map(T::of).unwrap_or_else(|| default_init_scale(&sub));
    let start = random_factors(block.sub.dims(), rank, scale, opts.seed, restart);
    let fitted = sweep_until_done(&sub, start, opts);
    block.embed(dims, &fitted.factors)
}

fn default_init_scale<T: Scalar, E: Engine<T>>(engine: &E) -> T {
    let n = engine.observed_count().max(1);
    let rms = (engine.observed_norm_sq() / T::of(n as f64)).sqrt();
    let s = T::of(0.1) * rms.cbrt();
    if s > T::zero() && s.is_finite() {
        s
    } else {
        T::of(0.1)
    }
}

/// Standard-normal factors scaled by `scale`; restart `r` draws from stream
/// `r` of the seeded generator, in the order A, B, C (row-major).
fn random_factors<T: Scalar>(dims: Dims, rank: usize, scale: T, seed: u64, restart: u64) -> [Matrix<T>; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart);
    let mut draw = |rows: usize| {
        Matrix::from_fn(rows, rank, |_, _| {
            let g: f64 = StandardNormal.sample(&mut rng);
            T::of(g) * scale
        })
    };
    let a = draw(dims.0);
    let b = draw(dims.1);
    let c = draw(dims.2);
    [a, b, c]
}

/// Solves every row of `target` against a shared damped Gram matrix.
fn solve_rows<T: Scalar>(gram: &mut Matrix<T>, rhs: &mut Matrix<T>, old: &Matrix<T>, mu: T) {
    let lambda = damp_diagonal(gram, T::of(DAMPING));
    for i in 0..gram.rows() {
        gram[(i, i)] += mu;
    }
    let chol = Cholesky::factor(gram).or_else(|| {
        // Extremely ill-conditioned Gram; retry with a stronger damping.
        let bump = T::of(1e-6) * (lambda + T::epsilon());
        for i in 0..gram.rows() {
            gram[(i, i)] += bump;
        }
        Cholesky::factor(gram)
    });
    for r in 0..rhs.rows() {
        let row = rhs.row_mut(r);
        for (v, &o) in row.iter_mut().zip(old.row(r)) {
            *v += lambda * o;
        }
        match &chol {
            Some(ch) => ch.solve_in_place(row),
            None => row.copy_from_slice(old.row(r)),
        }
    }
}

struct FullEngine<'a, T> {
    x: &'a Tensor3<T>,
}

impl<'a, T: Scalar> FullEngine<'a, T> {
    fn new(x: &'a Tensor3<T>) -> Self {
        Self { x }
    }
}

impl<T: Scalar> Engine<T> for FullEngine<'_, T> {
    fn dims(&self) -> Dims {
        self.x.dims()
    }

    fn observed_norm_sq(&self) -> T {
        self.x.frobenius_sq()
    }

    fn observed_count(&self) -> usize {
        self.x.len()
    }

    fn undetermined(&self) -> [Vec<usize>; 3] {
        Default::default()
    }

    fn objective(&self, f: &[Matrix<T>; 3]) -> T {
        let (ni, nj, nk) = self.x.dims();
        let rank = f[0].cols();
        let mut bc = vec![T::zero(); rank];
        let mut total = T::zero();
        let data = self.x.storage();
        for k in 0..nk {
            for j in 0..nj {
                for (r, v) in bc.iter_mut().enumerate() {
                    *v = f[1][(j, r)] * f[2][(k, r)];
                }
                let base = ni * (j + nj * k);
                for i in 0..ni {
                    let est: T = f[0].row(i).iter().zip(&bc).map(|(&a, &w)| a * w).sum();
                    let d = data[base + i] - est;
                    total += d * d;
                }
            }
        }
        total
    }

    fn update(&self, f: &mut [Matrix<T>; 3], mode: usize, mu: T) {
        let (p, q) = OTHERS[mode];
        let rank = f[0].cols();
        let mut gram = f[p].gram().hadamard(&f[q].gram()).expect("ranks agree");
        let (ni, nj, nk) = self.x.dims();
        let mut rhs = Matrix::zeros(f[mode].rows(), rank);
        let data = self.x.storage();
        let mut w = vec![T::zero(); rank];
        for k in 0..nk {
            for j in 0..nj {
                let base = ni * (j + nj * k);
                for i in 0..ni {
                    let idx = [i, j, k];
                    let (up, vq) = (f[p].row(idx[p]), f[q].row(idx[q]));
                    let xv = data[base + i];
                    let out = rhs.row_mut(idx[mode]);
                    for r in 0..rank {
                        w[r] = up[r] * vq[r];
                    }
                    for (o, &wr) in out.iter_mut().zip(&w) {
                        *o += xv * wr;
                    }
                }
            }
        }
        solve_rows(&mut gram, &mut rhs, &f[mode], mu);
        f[mode] = rhs;
    }
}

/// Observation structure of one mode: each row's observed entries plus the
/// interned index sets used to share Gram matrices between rows.
struct ModePlan<T> {
    /// Per row: `(p, q, x)` with `p`, `q` the row indices into the two other factors.
    rows: Vec<Vec<(u32, u32, T)>>,
    row_pattern: Vec<Option<usize>>,
    /// Per pattern: `(p, qset)` pairs.
    patterns: Vec<Vec<(u32, u32)>>,
    qsets: Vec<Vec<u32>>,
}

impl<T: Scalar> ModePlan<T> {
    fn build(mut rows: Vec<Vec<(u32, u32, T)>>) -> Self {
        let mut qset_ids: HashMap<Vec<u32>, u32> = HashMap::new();
        let mut qsets = Vec::new();
        let mut pattern_ids: HashMap<Vec<(u32, u32)>, usize> = HashMap::new();
        let mut patterns = Vec::new();
        let mut row_pattern = Vec::with_capacity(rows.len());
        for entries in &mut rows {
            if entries.is_empty() {
                row_pattern.push(None);
                continue;
            }
            entries.sort_by_key(|&(p, q, _)| (p, q));
            let mut pattern = Vec::new();
            let mut start = 0;
            while start < entries.len() {
                let p = entries[start].0;
                let end = start + entries[start..].iter().take_while(|e| e.0 == p).count();
                let qs: Vec<u32> = entries[start..end].iter().map(|e| e.1).collect();
                let id = *qset_ids.entry(qs).or_insert_with_key(|qs| {
                    qsets.push(qs.clone());
                    (qsets.len() - 1) as u32
                });
                pattern.push((p, id));
                start = end;
            }
            let id = *pattern_ids.entry(pattern).or_insert_with_key(|pat| {
                patterns.push(pat.clone());
                patterns.len() - 1
            });
            row_pattern.push(Some(id));
        }
        Self { rows, row_pattern, patterns, qsets }
    }
}

struct MaskedEngine<T> {
    dims: Dims,
    plans: [ModePlan<T>; 3],
    norm_sq: T,
    count: usize,
    blocks: Vec<SeedBlock<T>>,
}

impl<T: Scalar> MaskedEngine<T> {
    fn new(x: &Tensor3<T>, mask: &MaskTensor, rank: usize, init: InitStrategy) -> Result<Self, FitError> {
        if x.dims() != mask.dims() {
            return Err(crate::tensor::TensorError::DimMismatch(x.dims(), mask.dims()).into());
        }
        let dims = x.dims();
        let mut rows: [Vec<Vec<(u32, u32, T)>>; 3] =
            [vec![Vec::new(); dims.0], vec![Vec::new(); dims.1], vec![Vec::new(); dims.2]];
        let mut norm_sq = T::zero();
        let mut count = 0;
        for (i, j, k) in mask.observed() {
            let v = x.get(i, j, k);
            if !v.is_finite() {
                return Err(FitError::NonFiniteInput);
            }
            norm_sq += v * v;
            count += 1;
            let (i32_, j32, k32) = (i as u32, j as u32, k as u32);
            rows[0][i].push((j32, k32, v));
            rows[1][j].push((i32_, k32, v));
            rows[2][k].push((i32_, j32, v));
        }
        if count == 0 {
            return Err(FitError::EmptyMask);
        }
        let blocks = match init {
            InitStrategy::CompleteBlock if rank > 0 => complete_blocks(x, mask, rank),
            _ => Vec::new(),
        };
        let [r0, r1, r2] = rows;
        Ok(Self { dims, plans: [ModePlan::build(r0), ModePlan::build(r1), ModePlan::build(r2)], norm_sq, count, blocks })
    }
}

impl<T: Scalar> Engine<T> for MaskedEngine<T> {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn observed_norm_sq(&self) -> T {
        self.norm_sq
    }

    fn observed_count(&self) -> usize {
        self.count
    }

    fn seed_blocks(&self) -> &[SeedBlock<T>] {
        &self.blocks
    }

    fn undetermined(&self) -> [Vec<usize>; 3] {
        std::array::from_fn(|m| {
            self.plans[m].row_pattern.iter().enumerate().filter(|(_, p)| p.is_none()).map(|(r, _)| r).collect()
        })
    }

    fn objective(&self, f: &[Matrix<T>; 3]) -> T {
        let mut total = T::zero();
        for (i, entries) in self.plans[0].rows.iter().enumerate() {
            let a = f[0].row(i);
            for &(j, k, x) in entries {
                let (b, c) = (f[1].row(j as usize), f[2].row(k as usize));
                let est: T = a.iter().zip(b).zip(c).map(|((&a, &b), &c)| a * b * c).sum();
                let d = x - est;
                total += d * d;
            }
        }
        total
    }

    fn update(&self, f: &mut [Matrix<T>; 3], mode: usize, mu: T) {
        let plan = &self.plans[mode];
        let (p, q) = OTHERS[mode];
        let rank = f[0].cols();
        let (u, v) = (&f[p], &f[q]);

        let qsums: Vec<Matrix<T>> = plan
            .qsets
            .iter()
            .map(|qs| {
                let mut s = Matrix::zeros(rank, rank);
                for &qi in qs {
                    let row = v.row(qi as usize);
                    for a in 0..rank {
                        for b in a..rank {
                            s[(a, b)] += row[a] * row[b];
                        }
                    }
                }
                s
            })
            .collect();

        let mut solvers: Vec<Option<(Cholesky<T>, T)>> = Vec::with_capacity(plan.patterns.len());
        for pattern in &plan.patterns {
            let mut g = Matrix::zeros(rank, rank);
            for &(pi, s) in pattern {
                let row = u.row(pi as usize);
                let sum = &qsums[s as usize];
                for a in 0..rank {
                    for b in a..rank {
                        g[(a, b)] += row[a] * row[b] * sum[(a, b)];
                    }
                }
            }
            g.symmetrize_upper();
            let lambda = damp_diagonal(&mut g, T::of(DAMPING));
            for i in 0..rank {
                g[(i, i)] += mu;
            }
            let chol = Cholesky::factor(&g).or_else(|| {
                let bump = T::of(1e-6) * (lambda + T::epsilon());
                for i in 0..rank {
                    g[(i, i)] += bump;
                }
                Cholesky::factor(&g)
            });
            solvers.push(chol.map(|c| (c, lambda)));
        }

        let old = &f[mode];
        let mut next = Matrix::zeros(old.rows(), rank);
        for (r, entries) in plan.rows.iter().enumerate() {
            let Some(pid) = plan.row_pattern[r] else { continue };
            let out = next.row_mut(r);
            match &solvers[pid] {
                Some((chol, lambda)) => {
                    for &(pi, qi, x) in entries {
                        let (ur, vr) = (u.row(pi as usize), v.row(qi as usize));
                        for c in 0..rank {
                            out[c] += x * ur[c] * vr[c];
                        }
                    }
                    for (o, &prev) in out.iter_mut().zip(old.row(r)) {
                        *o += *lambda * prev;
                    }
                    chol.solve_in_place(out);
                }
                None => out.copy_from_slice(old.row(r)),
            }
        }
        f[mode] = next;
    }
}
