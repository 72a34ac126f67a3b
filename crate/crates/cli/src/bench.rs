//! Benchmark harness: Graphcore + NMS against plain quadratic NMS on growing
//! candidate pools, with output equality checked on every row.
//!
//! Candidate pools are built from clean synthetic pages stacked vertically
//! until the pool reaches each target size, so both pipelines see the same
//! input and must produce the same final boxes.

use std::time::Instant;

use anyhow::{bail, Context, Result};
use chargrid_ocr::charset::Charset;
use chargrid_ocr::codec::encode_page;
use chargrid_ocr::detect::{
    extract_candidates, graphcore_filter, nms, nms_bruteforce, CandidateBox, CharBox,
};
use chargrid_ocr::geometry::Rect;
use chargrid_ocr::synth::{generate_page, PageConfig};
use serde::Serialize;

/// One benchmark row; times are seconds (median over repetitions).
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub n_candidates: usize,
    pub n_after_graphcore: usize,
    pub t_graphcore_nms: f64,
    pub t_bruteforce_nms: f64,
    pub outputs_equal: bool,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    /// Timing repetitions per row; the median is reported.
    pub reps: usize,
    pub tau: f32,
    pub theta: f32,
    /// Layout of the synthetic pages feeding the pool.
    pub page: PageConfig,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            reps: 5,
            tau: 0.5,
            theta: 0.5,
            page: PageConfig::default(),
        }
    }
}

fn median_seconds(mut samples: Vec<f64>) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    samples[samples.len() / 2]
}

/// Sorted per-field comparison of the final box sets within `tol`.
fn rect_sets_equal(a: &[CharBox<f32>], b: &[CharBox<f32>], tol: f32) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let sorted = |boxes: &[CharBox<f32>]| {
        let mut rects: Vec<Rect<f32>> = boxes.iter().map(|bx| bx.rect).collect();
        rects.sort_by(|x, y| {
            (x.cx(), x.cy(), x.w(), x.h())
                .partial_cmp(&(y.cx(), y.cy(), y.w(), y.h()))
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        rects
    };
    sorted(a)
        .iter()
        .zip(sorted(b).iter())
        .all(|(x, y)| {
            (x.cx() - y.cx()).abs() <= tol
                && (x.cy() - y.cy()).abs() <= tol
                && (x.w() - y.w()).abs() <= tol
                && (x.h() - y.h()).abs() <= tol
        })
}

/// Grow a candidate pool by stacking clean page encodings below each other.
struct PoolBuilder {
    candidates: Vec<CandidateBox<f32>>,
    rows: usize,
    cols: usize,
    next_page: u64,
    charset: Charset,
    page: PageConfig,
    seed: u64,
}

impl PoolBuilder {
    fn new(page: PageConfig, seed: u64) -> Self {
        Self {
            candidates: Vec::new(),
            rows: 0,
            cols: page.shape.1,
            next_page: 0,
            charset: Charset::default_english(),
            page,
            seed,
        }
    }

    fn grow_to(&mut self, target: usize, tau: f32) -> Result<()> {
        while self.candidates.len() < target {
            let cfg = PageConfig {
                seed: self.seed.wrapping_add(self.next_page),
                ..self.page.clone()
            };
            let page = generate_page::<f32>(&cfg, &self.charset)
                .context("benchmark page generation")?;
            let (encoded, _) = encode_page(&page, &self.charset);
            let extraction = extract_candidates(&encoded, tau);
            if extraction.candidates.is_empty() {
                bail!("benchmark page produced no candidates");
            }
            let offset = self.rows;
            self.candidates.extend(extraction.candidates.into_iter().map(|c| {
                let rect = Rect::new(
                    c.rect.cx(),
                    c.rect.cy() + offset as f32,
                    c.rect.w(),
                    c.rect.h(),
                )
                .expect("offset rect stays valid");
                CandidateBox {
                    source: (c.source.0 + offset, c.source.1),
                    rect,
                    score: c.score,
                }
            }));
            self.rows += cfg.shape.0;
            self.next_page += 1;
        }
        Ok(())
    }

    fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

/// Run both filtering pipelines at each target candidate count.
pub fn bench_filtering(sizes: &[usize], seed: u64, opts: &BenchOptions) -> Result<BenchReport> {
    if sizes.is_empty() {
        bail!("at least one target size required");
    }
    if sizes.windows(2).any(|w| w[0] > w[1]) {
        bail!("target sizes must be ascending");
    }
    if opts.reps == 0 {
        bail!("repetitions must be at least 1");
    }

    let mut pool = PoolBuilder::new(opts.page.clone(), seed);
    let mut rows = Vec::with_capacity(sizes.len());
    for &target in sizes {
        pool.grow_to(target, opts.tau)?;
        let candidates = &pool.candidates;
        let shape = pool.shape();

        let mut filtered_nms: Option<Vec<CharBox<f32>>> = None;
        let mut n_after_graphcore = 0;
        let mut graphcore_times = Vec::with_capacity(opts.reps);
        for _ in 0..opts.reps {
            let start = Instant::now();
            let filtered = graphcore_filter(candidates, shape);
            let kept = nms(&filtered, opts.theta);
            graphcore_times.push(start.elapsed().as_secs_f64());
            n_after_graphcore = filtered.len();
            filtered_nms.get_or_insert(kept);
        }

        let mut bruteforce: Option<Vec<CharBox<f32>>> = None;
        let mut bruteforce_times = Vec::with_capacity(opts.reps);
        for _ in 0..opts.reps {
            let start = Instant::now();
            let kept = nms_bruteforce(candidates, opts.theta);
            bruteforce_times.push(start.elapsed().as_secs_f64());
            bruteforce.get_or_insert(kept);
        }

        rows.push(BenchRow {
            n_candidates: candidates.len(),
            n_after_graphcore,
            t_graphcore_nms: median_seconds(graphcore_times),
            t_bruteforce_nms: median_seconds(bruteforce_times),
            outputs_equal: rect_sets_equal(
                filtered_nms.as_deref().unwrap_or(&[]),
                bruteforce.as_deref().unwrap_or(&[]),
                1e-6,
            ),
        });
    }
    Ok(BenchReport { rows })
}

impl BenchReport {
    /// CSV with one row per target size.
    pub fn write_csv(&self, writer: impl std::io::Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        for row in &self.rows {
            out.serialize(row).context("write benchmark row")?;
        }
        out.flush().context("flush benchmark csv")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_bench_rows_are_consistent() {
        let opts = BenchOptions {
            reps: 1,
            ..BenchOptions::default()
        };
        let report = bench_filtering(&[200, 400], 1, &opts).unwrap();
        assert_eq!(report.rows.len(), 2);
        for row in &report.rows {
            assert!(row.n_candidates >= 200);
            assert!(row.n_after_graphcore <= row.n_candidates);
            assert!(row.outputs_equal, "pipelines disagree: {row:?}");
        }
        assert!(report.rows[1].n_candidates >= 400);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(bench_filtering(&[], 0, &BenchOptions::default()).is_err());
        assert!(bench_filtering(&[100, 50], 0, &BenchOptions::default()).is_err());
        let zero_reps = BenchOptions {
            reps: 0,
            ..BenchOptions::default()
        };
        assert!(bench_filtering(&[100], 0, &zero_reps).is_err());
    }

    #[test]
    fn csv_has_expected_header() {
        let report = BenchReport {
            rows: vec![BenchRow {
                n_candidates: 10,
                n_after_graphcore: 2,
                t_graphcore_nms: 0.5,
                t_bruteforce_nms: 1.5,
                outputs_equal: true,
            }],
        };
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "n_candidates,n_after_graphcore,t_graphcore_nms,t_bruteforce_nms,outputs_equal"
        ));
        assert!(text.contains("10,2,0.5,1.5,true"));
    }
}
