//! Masked versus full least-squares kernels on tall, skinny matrices.
//!
//! For every row count `n` and retention fraction `r`, a random set of
//! `round(r n)` rows is drawn and the masked kernel (reading the matrix
//! through the index list) is timed against the full one:
//!
//! * `matvec`: `F^T v` against `F[rows]^T v[rows]`;
//! * `qr`: copy + Householder QR of `F` against gather + QR of `F[rows]`.
//!
//! Each cell repeats until the running mean changes by less than
//! `rel_change`, the repetition cap is hit, or the cell's time budget runs out.

use std::hint::black_box;
use std::time::{Duration, Instant};

use aap_core::dense::{gather_rows_into, masked_tr_matvec_into, tr_matvec_into};
use aap_core::lsq::householder_in_place;
use aap_core::ColMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelOp {
    Matvec,
    Qr,
}

impl KernelOp {
    pub const ALL: [KernelOp; 2] = [KernelOp::Matvec, KernelOp::Qr];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelBenchOptions {
    pub n_grid: Vec<usize>,
    pub columns: usize,
    pub retentions: Vec<f64>,
    pub rep_cap: usize,
    pub rel_change: f64,
    /// Upper bound on the time spent timing one kernel in one cell.
    pub cell_budget: Duration,
    pub seed: u64,
}

pub const DEFAULT_RETENTIONS: [f64; 10] = [0.01, 0.02, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 0.9, 1.0];

impl Default for KernelBenchOptions {
    fn default() -> Self {
        Self {
            n_grid: powers_of_two(1 << 10, 1 << 18),
            columns: 50,
            retentions: DEFAULT_RETENTIONS.to_vec(),
            rep_cap: 10_000,
            rel_change: 1e-5,
            cell_budget: Duration::from_secs(2),
            seed: 0,
        }
    }
}

impl KernelBenchOptions {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_grid.is_empty() {
            return Err("empty size grid".into());
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err("size grid must be strictly ascending".into());
        }
        if self.columns == 0 || self.n_grid[0] < self.columns {
            return Err(format!("need at least {} rows for {} columns", self.columns, self.columns));
        }
        if self.retentions.is_empty() || self.retentions.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
            return Err("retentions must lie in (0, 1]".into());
        }
        if self.rep_cap == 0 {
            return Err("repetition cap must be positive".into());
        }
        Ok(())
    }
}

/// `lo, 2 lo, 4 lo, ...` up to and including `hi`.
pub fn powers_of_two(lo: usize, hi: usize) -> Vec<usize> {
    let mut n = lo.max(1);
    let mut out = Vec::new();
    while n <= hi {
        out.push(n);
        n *= 2;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub n: usize,
    pub columns: usize,
    pub retention: f64,
    pub op: KernelOp,
    pub masked_seconds: f64,
    pub full_seconds: f64,
    pub masked_reps: usize,
    pub full_reps: usize,
}

impl BenchRecord {
    pub fn ratio(&self) -> f64 {
        self.masked_seconds / self.full_seconds
    }
}

/// Largest retention at which the masked kernel beat the full one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSummary {
    pub n: usize,
    pub op: KernelOp,
    pub max_faster_retention: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct Timing {
    pub mean_seconds: f64,
    pub reps: usize,
}

/// Repeats `f` until the running mean settles (relative change below
/// `rel_change` on two consecutive repetitions), `rep_cap` repetitions, or
/// `budget` elapsed. At least one repetition always runs.
pub fn time_until_stable(mut f: impl FnMut(), rel_change: f64, rep_cap: usize, budget: Duration) -> Timing {
    let started = Instant::now();
    let mut total = 0.0;
    let mut mean = 0.0;
    let mut settled = 0;
    let mut reps = 0;
    while reps < rep_cap {
        let t = Instant::now();
        f();
        let dt = t.elapsed().as_secs_f64();
        reps += 1;
        total += dt;
        let new_mean = total / reps as f64;
        if reps > 1 && ((new_mean - mean) / new_mean).abs() < rel_change {
            settled += 1;
            if settled >= 2 {
                mean = new_mean;
                break;
            }
        } else {
            settled = 0;
        }
        mean = new_mean;
        if started.elapsed() >= budget {
            break;
        }
    }
    Timing {
        mean_seconds: mean.max(f64::MIN_POSITIVE),
        reps,
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ColMatrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    ColMatrix::from_col_major(rows, cols, data)
}

pub fn retained(n: usize, retention: f64) -> usize {
    ((retention * n as f64).round() as usize).clamp(1, n)
}

/// Times every `(n, retention, op)` cell. `progress` sees each record as
/// soon as it is measured.
pub fn bench_masked_kernels(
    opts: &KernelBenchOptions,
    mut progress: impl FnMut(&BenchRecord),
) -> (Vec<BenchRecord>, Vec<ThresholdSummary>) {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let c = opts.columns;
    let mut records = Vec::with_capacity(opts.n_grid.len() * opts.retentions.len() * 2);
    let mut summary = Vec::with_capacity(opts.n_grid.len() * 2);
    let time = |f: &mut dyn FnMut()| time_until_stable(f, opts.rel_change, opts.rep_cap, opts.cell_budget);
    for &n in &opts.n_grid {
        let a = random_matrix(&mut rng, n, c);
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut y = vec![0.0; c];
        let mut buf = vec![0.0; n * c];
        let mut tau = vec![0.0; c];

        let full_matvec = time(&mut || {
            tr_matvec_into(&a, black_box(&v), &mut y);
            black_box(&y);
        });
        let full_qr = time(&mut || {
            buf.copy_from_slice(a.as_slice());
            householder_in_place(&mut buf, n, c, &mut tau);
            black_box(&buf);
        });
        for op in KernelOp::ALL {
            let full = if op == KernelOp::Matvec { full_matvec } else { full_qr };
            let mut best: Option<f64> = None;
            for &r in &opts.retentions {
                let l = retained(n, r);
                let mut rows = sample(&mut rng, n, l).into_vec();
                rows.sort_unstable();
                let masked = match op {
                    KernelOp::Matvec => time(&mut || {
                        masked_tr_matvec_into(&a, black_box(&rows), black_box(&v), &mut y);
                        black_box(&y);
                    }),
                    KernelOp::Qr => {
                        let sub = &mut buf[..l * c];
                        time(&mut || {
                            gather_rows_into(&a, black_box(&rows), sub);
                            householder_in_place(sub, l, c, &mut tau);
                            black_box(&sub);
                        })
                    }
                };
                let rec = BenchRecord {
                    n,
                    columns: c,
                    retention: r,
                    op,
                    masked_seconds: masked.mean_seconds,
                    full_seconds: full.mean_seconds,
                    masked_reps: masked.reps,
                    full_reps: full.reps,
                };
                if rec.masked_seconds < rec.full_seconds {
                    best = Some(best.map_or(r, |b: f64| b.max(r)));
                }
                progress(&rec);
                records.push(rec);
            }
            summary.push(ThresholdSummary {
                n,
                op,
                max_faster_retention: best,
            });
        }
    }
    (records, summary)
}

/// Restricts the calling thread to the CPU it is currently running on, so
/// that timings are not disturbed by migrations. Returns the CPU index.
#[cfg(target_os = "linux")]
pub fn pin_to_current_cpu() -> std::io::Result<usize> {
    // SAFETY: plain libc calls on a zero-initialized, properly sized cpu_set_t.
    unsafe {
        let cpu = libc::sched_getcpu();
        if cpu < 0 {
            return Err(std::io::Error::last_os_error());
        }
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_SET(cpu as usize, &mut set);
        if libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set) != 0 {
            return Err(std::io::Error::last_os_error());
        }
        Ok(cpu as usize)
    }
}

#[cfg(not(target_os = "linux"))]
pub fn pin_to_current_cpu() -> std::io::Result<usize> {
    Err(std::io::Error::new(std::io::ErrorKind::Unsupported, "CPU pinning is only implemented on Linux"))
}
