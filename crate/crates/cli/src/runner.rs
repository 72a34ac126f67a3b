//! File-level pipeline operations behind the CLI subcommands. Pages are
//! processed on a bounded worker pool; outputs are written in input order so
//! reruns produce byte-identical artifacts.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use chargrid_ocr::charset::Charset;
use chargrid_ocr::codec::{approximate_char_boxes, encode_page, WidthTable};
use chargrid_ocr::metrics::{match_words_with, to_annotation, CorpusReport, MatchOptions};
use chargrid_ocr::page::{
    read_page_records, write_page_records, GroundTruthPage, NetworkOutput, PageRecord,
    WordAnnotation,
};
use chargrid_ocr::synth::{
    corrupt_output, generate_page, NoiseConfig, PageConfig, PRNG_ALGORITHM,
};
use chargrid_ocr::words::{decode_page, DecodeOptions, DecodeReport};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Decoded words for one page, as written to prediction JSON lines.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub doc_id: String,
    pub words: Vec<WordAnnotation<f32>>,
    /// Member character boxes per word, present with `--emit-chars`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub chars: Option<Vec<Vec<PredictedChar>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictedChar {
    pub symbol: String,
    pub cx: f32,
    pub cy: f32,
    pub w: f32,
    pub h: f32,
    pub score: f32,
}

/// Corpus metadata written next to synthetic corpora.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub prng: String,
    pub seed: u64,
    pub pages: usize,
    pub config: PageConfig,
    pub noise: Option<NoiseConfig>,
}

fn build_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("build worker pool")
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| {
        format!("create {}", path.display())
    })?))
}

fn open_file(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| {
        format!("open {}", path.display())
    })?))
}

/// Load a charset from `--charset`, or the bundled English set.
pub fn load_charset(path: Option<&Path>) -> Result<Charset> {
    match path {
        None => Ok(Charset::default_english()),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("read {}", path.display()))?;
            Charset::parse(&text).with_context(|| format!("parse charset {}", path.display()))
        }
    }
}

fn page_doc_id(index: usize) -> String {
    format!("page-{index:05}")
}

/// Generate a synthetic corpus: page JSON lines, encoded grid bundles and a
/// metadata file. Page `k` derives its layout seed as `seed + k` and, when
/// noise is configured, its noise seed as `noise.seed + k`.
pub fn synth_corpus(
    out_dir: &Path,
    pages: usize,
    config: &PageConfig,
    noise: Option<&NoiseConfig>,
    charset: &Charset,
    threads: usize,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("create {}", out_dir.display()))?;
    let pool = build_pool(threads)?;
    let records: Vec<PageRecord<f32>> = pool.install(|| {
        (0..pages)
            .into_par_iter()
            .map(|k| -> Result<PageRecord<f32>> {
                let cfg = PageConfig {
                    seed: config.seed.wrapping_add(k as u64),
                    ..config.clone()
                };
                let page = generate_page::<f32>(&cfg, charset)?;
                let (mut encoded, _) = encode_page(&page, charset);
                if let Some(noise) = noise {
                    let per_page = NoiseConfig {
                        seed: noise.seed.wrapping_add(k as u64),
                        ..noise.clone()
                    };
                    encoded = corrupt_output(&encoded, &per_page, charset)?;
                }
                let doc_id = page_doc_id(k);
                encoded.write_dir(out_dir, &doc_id)?;
                Ok(PageRecord::from_page(doc_id, &page))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let pages_path = out_dir.join("pages.jsonl");
    let mut out = create_file(&pages_path)?;
    write_page_records(&mut out, &records)?;
    out.flush().context("flush pages.jsonl")?;

    let meta = CorpusMeta {
        prng: PRNG_ALGORITHM.into(),
        seed: config.seed,
        pages,
        config: config.clone(),
        noise: noise.cloned(),
    };
    let meta_path = out_dir.join("meta.json");
    let mut out = create_file(&meta_path)?;
    serde_json::to_writer_pretty(&mut out, &meta).context("write meta.json")?;
    out.write_all(b"\n")?;
    out.flush().context("flush meta.json")?;
    Ok(())
}

/// Encode ground-truth pages into grid bundles. Character boxes are derived
/// by splitting each word uniformly.
pub fn encode_pages(pages_path: &Path, out_dir: &Path, charset: &Charset, threads: usize) -> Result<()> {
    let records = read_page_records::<f32>(open_file(pages_path)?)
        .with_context(|| format!("parse {}", pages_path.display()))?;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("create {}", out_dir.display()))?;
    let widths = WidthTable::uniform(charset);
    let pool = build_pool(threads)?;
    let warnings: Vec<(String, usize)> = pool.install(|| {
        records
            .par_iter()
            .map(|record| -> Result<(String, usize)> {
                let mut chars = Vec::new();
                for (id, word) in record.words.iter().enumerate() {
                    chars.extend(approximate_char_boxes(word, id, &widths, charset)?);
                }
                let page = GroundTruthPage::new(record.shape, record.words.clone(), chars)
                    .with_context(|| format!("page {}", record.doc_id))?;
                let (encoded, warnings) = encode_page(&page, charset);
                encoded.write_dir(out_dir, &record.doc_id)?;
                Ok((record.doc_id.clone(), warnings.len()))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    for (doc_id, count) in warnings {
        if count > 0 {
            eprintln!("{doc_id}: {count} character boxes cover no sample point");
        }
    }
    Ok(())
}

/// Decode flags shared by the CLI and tests.
#[derive(Debug, Clone, Copy)]
pub struct DecodeFlags {
    pub tau: f32,
    pub theta: f32,
    pub use_graphcore: bool,
    pub emit_chars: bool,
}

impl Default for DecodeFlags {
    fn default() -> Self {
        Self {
            tau: 0.5,
            theta: 0.5,
            use_graphcore: true,
            emit_chars: false,
        }
    }
}

/// Page ids of every `<id>.S.cgrd` bundle in a directory, sorted.
pub fn bundle_ids(dir: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    let entries =
        std::fs::read_dir(dir).with_context(|| format!("read {}", dir.display()))?;
    for entry in entries {
        let entry = entry.with_context(|| format!("read {}", dir.display()))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some(id) = name.strip_suffix(".S.cgrd") {
            ids.push(id.to_string());
        }
    }
    ids.sort();
    Ok(ids)
}

/// Decode every bundle in `in_dir` and write prediction JSON lines to
/// `out_path`. Per-page warning summaries go to standard error; the word
/// output order follows the sorted page ids regardless of scheduling.
pub fn decode_dir(
    in_dir: &Path,
    out_path: &Path,
    flags: &DecodeFlags,
    charset: &Charset,
    threads: usize,
) -> Result<Vec<DecodeReport>> {
    let ids = bundle_ids(in_dir)?;
    if ids.is_empty() {
        bail!("no grid bundles (*.S.cgrd) found in {}", in_dir.display());
    }
    let options = DecodeOptions {
        tau: flags.tau,
        theta: flags.theta,
        use_graphcore: flags.use_graphcore,
    };
    let pool = build_pool(threads)?;
    let decoded: Vec<(PredictionRecord, DecodeReport)> = pool.install(|| {
        ids.par_iter()
            .map(|id| -> Result<(PredictionRecord, DecodeReport)> {
                let bundle = NetworkOutput::<f32>::read_dir(in_dir, id)?;
                let page = decode_page(&bundle, charset, &options);
                let words: Vec<WordAnnotation<f32>> =
                    page.words.iter().map(to_annotation).collect();
                let chars = flags.emit_chars.then(|| {
                    page.words
                        .iter()
                        .map(|word| {
                            word.char_indices
                                .iter()
                                .map(|&k| {
                                    let b = &page.char_boxes[k];
                                    PredictedChar {
                                        symbol: charset
                                            .text_symbol(b.symbol_index)
                                            .to_string(),
                                        cx: b.rect.cx(),
                                        cy: b.rect.cy(),
                                        w: b.rect.w(),
                                        h: b.rect.h(),
                                        score: b.score,
                                    }
                                })
                                .collect()
                        })
                        .collect()
                });
                Ok((
                    PredictionRecord {
                        doc_id: id.clone(),
                        words,
                        chars,
                    },
                    page.report,
                ))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut out = create_file(out_path)?;
    for (record, _) in &decoded {
        serde_json::to_writer(&mut out, record).context("write prediction record")?;
        out.write_all(b"\n")?;
    }
    out.flush()
        .with_context(|| format!("flush {}", out_path.display()))?;

    let mut reports = Vec::with_capacity(decoded.len());
    for (record, report) in decoded {
        if report.dropped_candidates > 0
            || report.boxes_outside_grid > 0
            || report.unsampleable_boxes > 0
        {
            eprintln!(
                "{}: {} candidates dropped, {} boxes outside grid, {} boxes unsampleable",
                record.doc_id,
                report.dropped_candidates,
                report.boxes_outside_grid,
                report.unsampleable_boxes
            );
        }
        reports.push(report);
    }
    Ok(reports)
}

/// Read prediction JSON lines keyed by `doc_id`.
pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    use std::io::BufRead;
    let reader = open_file(path)?;
    let mut records = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.with_context(|| format!("read {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PredictionRecord = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}", path.display(), lineno + 1))?;
        records.push(record);
    }
    Ok(records)
}

/// Match predictions against ground truth per document and aggregate.
/// Documents appearing on only one side count as fully unmatched on the
/// other.
pub fn evaluate(
    pred_path: &Path,
    gt_path: &Path,
    ignore_case: bool,
) -> Result<CorpusReport> {
    let predictions = read_predictions(pred_path)?;
    let gt = read_page_records::<f32>(open_file(gt_path)?)
        .with_context(|| format!("parse {}", gt_path.display()))?;

    let mut pred_by_doc: BTreeMap<String, Vec<WordAnnotation<f32>>> = BTreeMap::new();
    for record in predictions {
        if pred_by_doc.insert(record.doc_id.clone(), record.words).is_some() {
            bail!("duplicate doc_id {:?} in {}", record.doc_id, pred_path.display());
        }
    }
    let mut gt_by_doc: BTreeMap<String, Vec<WordAnnotation<f32>>> = BTreeMap::new();
    for record in gt {
        if gt_by_doc.insert(record.doc_id.clone(), record.words).is_some() {
            bail!("duplicate doc_id {:?} in {}", record.doc_id, gt_path.display());
        }
    }

    let opts = MatchOptions { ignore_case };
    let empty: Vec<WordAnnotation<f32>> = Vec::new();
    let mut doc_ids: Vec<String> = pred_by_doc.keys().chain(gt_by_doc.keys()).cloned().collect();
    doc_ids.sort();
    doc_ids.dedup();

    let mut documents = Vec::with_capacity(doc_ids.len());
    for doc_id in doc_ids {
        let pred = pred_by_doc.get(&doc_id).unwrap_or(&empty);
        let gt = gt_by_doc.get(&doc_id).unwrap_or(&empty);
        documents.push((doc_id, match_words_with(pred, gt, &opts)));
    }
    Ok(CorpusReport::from_documents(documents)?)
}

/// Write the evaluation report as JSON, plus optional per-document CSV rows.
pub fn write_report(
    report: &CorpusReport,
    out_path: &Path,
    per_doc_csv: Option<&Path>,
) -> Result<()> {
    let mut out = create_file(out_path)?;
    serde_json::to_writer_pretty(&mut out, report).context("write report")?;
    out.write_all(b"\n")?;
    out.flush()
        .with_context(|| format!("flush {}", out_path.display()))?;

    if let Some(csv_path) = per_doc_csv {
        let mut csv_out = csv::Writer::from_writer(create_file(csv_path)?);
        csv_out
            .write_record(["doc_id", "n_matched", "n_unmatched_pred", "n_unmatched_gt", "wrr"])
            .context("write csv header")?;
        for doc in &report.per_document {
            csv_out
                .write_record([
                    doc.doc_id.clone(),
                    doc.result.n_matched.to_string(),
                    doc.result.n_unmatched_pred.to_string(),
                    doc.result.n_unmatched_gt.to_string(),
                    doc.wrr.to_string(),
                ])
                .context("write csv row")?;
        }
        csv_out.flush().context("flush csv")?;
    }
    Ok(())
}

/// Summed warning counters, for the exit message.
pub fn total_warnings(reports: &[DecodeReport]) -> usize {
    reports
        .iter()
        .map(|r| r.dropped_candidates + r.boxes_outside_grid + r.unsampleable_boxes)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chargrid_ocr::synth::Rotation;

    fn tiny_config() -> PageConfig {
        PageConfig {
            shape: (48, 192),
            columns: 1,
            char_w: 4.0,
            char_h: 6.0,
            word_len_range: (3, 5),
            words_per_line_range: (2, 4),
            line_spacing: 1.5,
            rotation: Rotation::R0,
            seed: 0,
        }
    }

    #[test]
    fn synth_encode_decode_eval_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("corpus");
        let charset = Charset::default_english();
        synth_corpus(&corpus, 3, &tiny_config(), None, &charset, 1).unwrap();

        assert!(corpus.join("pages.jsonl").exists());
        assert!(corpus.join("meta.json").exists());
        assert!(corpus.join("page-00000.S.cgrd").exists());
        assert!(corpus.join("page-00002.Yw.cgrd").exists());

        let predictions = dir.path().join("pred.jsonl");
        let reports = decode_dir(
            &corpus,
            &predictions,
            &DecodeFlags::default(),
            &charset,
            1,
        )
        .unwrap();
        assert_eq!(reports.len(), 3);

        let report = evaluate(&predictions, &corpus.join("pages.jsonl"), false).unwrap();
        assert_eq!(report.corpus_wrr, 1.0);
        assert_eq!(report.per_document.len(), 3);
    }

    #[test]
    fn decode_emits_member_chars_on_request() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("corpus");
        let charset = Charset::default_english();
        synth_corpus(&corpus, 1, &tiny_config(), None, &charset, 1).unwrap();
        let predictions = dir.path().join("pred.jsonl");
        let flags = DecodeFlags {
            emit_chars: true,
            ..DecodeFlags::default()
        };
        decode_dir(&corpus, &predictions, &flags, &charset, 1).unwrap();
        let records = read_predictions(&predictions).unwrap();
        let chars = records[0].chars.as_ref().expect("chars emitted");
        assert_eq!(chars.len(), records[0].words.len());
        for (word, members) in records[0].words.iter().zip(chars) {
            assert_eq!(word.text.chars().count(), members.len());
            let joined: String = members.iter().map(|c| c.symbol.as_str()).collect();
            assert_eq!(joined, word.text);
        }
    }

    #[test]
    fn missing_bundle_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("corpus");
        let charset = Charset::default_english();
        synth_corpus(&corpus, 1, &tiny_config(), None, &charset, 1).unwrap();
        std::fs::remove_file(corpus.join("page-00000.Xw.cgrd")).unwrap();
        let err = decode_dir(
            &corpus,
            &dir.path().join("pred.jsonl"),
            &DecodeFlags::default(),
            &charset,
            1,
        )
        .unwrap_err();
        assert!(format!("{err:#}").contains("page-00000.Xw.cgrd"));
    }

    #[test]
    fn encode_matches_synth_tensors() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("corpus");
        let reencoded = dir.path().join("reencoded");
        let charset = Charset::default_english();
        synth_corpus(&corpus, 2, &tiny_config(), None, &charset, 1).unwrap();
        encode_pages(&corpus.join("pages.jsonl"), &reencoded, &charset, 1).unwrap();
        for id in ["page-00000", "page-00001"] {
            let a = NetworkOutput::<f32>::read_dir(&corpus, id).unwrap();
            let b = NetworkOutput::<f32>::read_dir(&reencoded, id).unwrap();
            assert_eq!(a, b, "bundle {id} differs after re-encoding");
        }
    }

    #[test]
    fn eval_handles_one_sided_documents() {
        let dir = tempfile::tempdir().unwrap();
        let pred_path = dir.path().join("pred.jsonl");
        let gt_path = dir.path().join("gt.jsonl");
        std::fs::write(
            &pred_path,
            concat!(
                r#"{"doc_id":"a","words":[{"text":"x","cx":1.0,"cy":1.0,"w":2.0,"h":2.0}]}"#,
                "\n",
                r#"{"doc_id":"ghost","words":[{"text":"y","cx":1.0,"cy":1.0,"w":2.0,"h":2.0}]}"#,
                "\n"
            ),
        )
        .unwrap();
        std::fs::write(
            &gt_path,
            concat!(
                r#"{"doc_id":"a","shape":[8,8],"words":[{"text":"x","cx":1.0,"cy":1.0,"w":2.0,"h":2.0}]}"#,
                "\n",
                r#"{"doc_id":"missing","shape":[8,8],"words":[{"text":"z","cx":1.0,"cy":1.0,"w":2.0,"h":2.0}]}"#,
                "\n"
            ),
        )
        .unwrap();
        let report = evaluate(&pred_path, &gt_path, false).unwrap();
        assert_eq!(report.per_document.len(), 3);
        // Weighted: doc a perfect (1 word), ghost weightless, missing zero.
        assert_eq!(report.corpus_wrr, 0.5);
    }
}
