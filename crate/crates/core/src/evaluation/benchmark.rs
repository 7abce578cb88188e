use std::fmt;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::recognition::{rank_candidates, recognize, EmbeddingModel, ProductCatalog, RecognitionConfig, RecognitionError, Recollection};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkCase {
    pub candidates: Vec<String>,
    /// How many of the candidates are known objects.
    pub known_candidates: usize,
    pub observed: DVector<f64>,
    pub truth: String,
    pub truth_known: bool,
}

impl BenchmarkCase {
    pub fn validate(&self) -> Result<(), String> {
        if self.candidates.len() != 2 * self.known_candidates {
            return Err(format!("{} candidates for {} known", self.candidates.len(), self.known_candidates));
        }
        if !self.candidates.contains(&self.truth) {
            return Err(format!("ground truth {} not among candidates", self.truth));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub top1: String,
    /// Stage-one verdict, for pipelines that have one.
    pub recollection: Option<Recollection>,
}

pub trait RecognitionPipeline {
    fn name(&self) -> &str;
    fn run(&mut self, case: &BenchmarkCase) -> Result<PipelineOutput, RecognitionError>;
}

pub struct SingleModelPipeline<'a> {
    pub name: String,
    pub model: &'a EmbeddingModel,
    pub catalog: &'a ProductCatalog,
}

impl RecognitionPipeline for SingleModelPipeline<'_> {
    fn name(&self) -> &str {
        &self.name
    }

    fn run(&mut self, case: &BenchmarkCase) -> Result<PipelineOutput, RecognitionError> {
        let r = rank_candidates(&case.observed, self.model, self.catalog, &case.candidates)?;
        Ok(PipelineOutput { top1: r[0].0.clone(), recollection: None })
    }
}

pub struct TwoStagePipeline<'a> {
    pub config: &'a RecognitionConfig,
    pub catalog: &'a ProductCatalog,
}

impl RecognitionPipeline for TwoStagePipeline<'_> {
    fn name(&self) -> &str {
        "Two-stage K-net + N-net"
    }

    fn run(&mut self, case: &BenchmarkCase) -> Result<PipelineOutput, RecognitionError> {
        let r = recognize(&case.observed, self.config, self.catalog, &case.candidates)?;
        Ok(PipelineOutput { top1: r.ranking[0].0.clone(), recollection: Some(r.stage) })
    }
}

/// Returns the ground truth and the correct recollection.
pub struct OraclePipeline;

impl RecognitionPipeline for OraclePipeline {
    fn name(&self) -> &str {
        "Oracle"
    }

    fn run(&mut self, case: &BenchmarkCase) -> Result<PipelineOutput, RecognitionError> {
        Ok(PipelineOutput {
            top1: case.truth.clone(),
            recollection: Some(if case.truth_known { Recollection::Known } else { Recollection::Novel }),
        })
    }
}

/// Uniformly random candidate.
pub struct RandomPipeline(pub ChaCha8Rng);

impl RandomPipeline {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }
}

impl RecognitionPipeline for RandomPipeline {
    fn name(&self) -> &str {
        "Random"
    }

    fn run(&mut self, case: &BenchmarkCase) -> Result<PipelineOutput, RecognitionError> {
        if case.candidates.is_empty() {
            return Err(RecognitionError::NoCandidates);
        }
        let i = self.0.random_range(0..case.candidates.len());
        Ok(PipelineOutput { top1: case.candidates[i].clone(), recollection: None })
    }
}

/// Top-1 accuracies in [0, 1]; `None` where a split has no cases or the
/// pipeline has no recollection stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub method: String,
    pub k_vs_n: Option<f64>,
    pub known: Option<f64>,
    pub novel: Option<f64>,
    pub mixed: Option<f64>,
    pub cases: usize,
}

fn ratio(hit: usize, n: usize) -> Option<f64> {
    (n > 0).then(|| hit as f64 / n as f64)
}

pub fn run_1v20_benchmark(cases: &[BenchmarkCase], pipeline: &mut dyn RecognitionPipeline) -> Result<BenchmarkResult, RecognitionError> {
    let (mut known_hit, mut known_n, mut novel_hit, mut novel_n) = (0, 0, 0, 0);
    let (mut rec_hit, mut rec_n) = (0, 0);
    for case in cases {
        let out = pipeline.run(case)?;
        let hit = (out.top1 == case.truth) as usize;
        if case.truth_known {
            known_hit += hit;
            known_n += 1;
        } else {
            novel_hit += hit;
            novel_n += 1;
        }
        if let Some(r) = out.recollection {
            rec_n += 1;
            rec_hit += ((r == Recollection::Known) == case.truth_known) as usize;
        }
    }
    Ok(BenchmarkResult {
        method: pipeline.name().to_string(),
        k_vs_n: ratio(rec_hit, rec_n),
        known: ratio(known_hit, known_n),
        novel: ratio(novel_hit, novel_n),
        mixed: ratio(known_hit + novel_hit, cases.len()),
        cases: cases.len(),
    })
}

pub struct BenchmarkTable<'a>(pub &'a [BenchmarkResult]);

impl fmt::Display for BenchmarkTable<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cell = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.1}", 100.0 * x));
        let w = self.0.iter().map(|r| r.method.len()).max().unwrap_or(6).max(6);
        writeln!(f, "{:<w$}  {:>8}  {:>6}  {:>6}  {:>6}", "Method", "K vs N", "Known", "Novel", "Mixed")?;
        for r in self.0 {
            writeln!(
                f,
                "{:<w$}  {:>8}  {:>6}  {:>6}  {:>6}",
                r.method,
                cell(r.k_vs_n),
                cell(r.known),
                cell(r.novel),
                cell(r.mixed)
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cases(n: usize) -> Vec<BenchmarkCase> {
        (0..n)
            .map(|i| {
                let candidates: Vec<String> = (0..20).map(|j| if j < 10 { format!("k{j}") } else { format!("n{j}") }).collect();
                let truth = candidates[i % 20].clone();
                BenchmarkCase {
                    truth_known: truth.starts_with('k'),
                    candidates,
                    known_candidates: 10,
                    observed: DVector::zeros(2),
                    truth,
                }
            })
            .collect()
    }

    #[test]
    fn oracle_is_perfect() {
        let r = run_1v20_benchmark(&cases(40), &mut OraclePipeline).unwrap();
        assert_eq!((r.k_vs_n, r.known, r.novel, r.mixed), (Some(1.0), Some(1.0), Some(1.0), Some(1.0)));
        assert!(cases(3).iter().all(|c| c.validate().is_ok()));
    }

    #[test]
    fn random_is_near_chance() {
        let r = run_1v20_benchmark(&cases(20000), &mut RandomPipeline::new(3)).unwrap();
        assert!((r.mixed.unwrap() - 0.05).abs() < 0.01);
        assert_eq!(r.k_vs_n, None);
    }

    #[test]
    fn table_formats_percentages() {
        let r = BenchmarkResult { method: "K-net".into(), k_vs_n: None, known: Some(0.997), novel: Some(0.284), mixed: Some(0.5), cases: 2 };
        let s = BenchmarkTable(&[r]).to_string();
        assert!(s.contains("99.7") && s.contains("28.4") && s.contains("50.0") && s.contains(" - "), "{s}");
    }
}
