//! Human caption review: pending queues, append-only ratings, verdict
//! aggregation and rating statistics.
//!
//! Ratings live in `ratings.jsonl` next to `cards.jsonl`. Verdicts are
//! recomputed from the full ratings log on every aggregation, and the
//! resulting review statuses are written back to the card store.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::caption::CaptionPair;
use crate::cards::{self, CardError, MetadataCard, ReviewStatus};
use crate::codegen::CodeGrammar;
use crate::workspace::{self, StoreError};

pub const CRITERIA: [&str; 4] = ["completeness", "consistency", "diversity", "readability"];
pub const RATINGS_FILE: &str = "ratings.jsonl";
pub const CARDS_FILE: &str = "cards.jsonl";

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("unknown card `{0}`")]
    UnknownCard(String),
    #[error("worker `{worker_id}` already rated card `{card_id}`")]
    DuplicateRating { card_id: String, worker_id: String },
    #[error("{criterion} score {value} is outside 1..=5")]
    ScoreOutOfRange { criterion: &'static str, value: i64 },
    #[error("unknown worker `{0}`")]
    UnknownWorker(String),
    #[error("invalid review config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Card(#[from] CardError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scores {
    pub completeness: i64,
    pub consistency: i64,
    pub diversity: i64,
    pub readability: i64,
}

impl Scores {
    pub fn uniform(v: i64) -> Self {
        Scores {
            completeness: v,
            consistency: v,
            diversity: v,
            readability: v,
        }
    }

    /// Scores in [`CRITERIA`] order.
    pub fn values(&self) -> [i64; 4] {
        [self.completeness, self.consistency, self.diversity, self.readability]
    }

    pub fn validate(&self) -> Result<(), ReviewError> {
        for (criterion, value) in CRITERIA.into_iter().zip(self.values()) {
            if !(1..=5).contains(&value) {
                return Err(ReviewError::ScoreOutOfRange { criterion, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingSubmission {
    pub card_id: String,
    pub worker_id: String,
    pub scores: Scores,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rating {
    pub card_id: String,
    pub worker_id: String,
    pub scores: Scores,
    /// RFC 3339, UTC.
    pub timestamp: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Medians {
    pub completeness: f64,
    pub consistency: f64,
    pub diversity: f64,
    pub readability: f64,
}

impl Medians {
    pub fn values(&self) -> [f64; 4] {
        [self.completeness, self.consistency, self.diversity, self.readability]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewVerdict {
    pub card_id: String,
    pub medians: Medians,
    pub rating_count: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReviewConfig {
    pub threshold: f64,
    pub min_raters: usize,
}

impl Default for ReviewConfig {
    fn default() -> Self {
        ReviewConfig {
            threshold: 3.0,
            min_raters: 1,
        }
    }
}

impl ReviewConfig {
    pub fn validate(&self) -> Result<(), ReviewError> {
        if !(1.0..=5.0).contains(&self.threshold) {
            return Err(ReviewError::InvalidConfig("threshold must lie in [1, 5]".into()));
        }
        if self.min_raters == 0 {
            return Err(ReviewError::InvalidConfig("min_raters must be >= 1".into()));
        }
        Ok(())
    }
}

/// One queue entry: both captions plus what a client needs to preview the
/// chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub card_id: String,
    pub captions: CaptionPair,
    pub spec_summary: String,
    pub vega_lite: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewStats {
    pub rating_count: usize,
    /// Per criterion, counts of scores 1 through 5.
    pub histograms: BTreeMap<String, [u64; 5]>,
    /// Percentage of ratings with every score at or above the threshold;
    /// `None` when there are no ratings.
    pub pass_rate: Option<f64>,
    pub pass_rate_defined: bool,
    pub cards: BTreeMap<String, usize>,
}

/// Midpoint median; `None` for an empty slice.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

/// Verdict for one card's ratings.
pub fn verdict(card_id: &str, ratings: &[&Rating], config: &ReviewConfig) -> ReviewVerdict {
    let m = |i: usize| median(&ratings.iter().map(|r| r.scores.values()[i] as f64).collect::<Vec<_>>()).unwrap_or(0.0);
    let medians = Medians {
        completeness: m(0),
        consistency: m(1),
        diversity: m(2),
        readability: m(3),
    };
    let passed = ratings.len() >= config.min_raters && medians.values().iter().all(|v| *v >= config.threshold);
    ReviewVerdict {
        card_id: card_id.to_string(),
        medians,
        rating_count: ratings.len(),
        passed,
    }
}

struct Snapshot {
    cards: BTreeMap<String, MetadataCard>,
    ratings: Vec<Rating>,
    rated: HashSet<(String, String)>,
}

/// Review state over one workspace. Readers take cheap snapshot clones;
/// writers are serialized through `write_lock`.
pub struct ReviewStore {
    cards_path: PathBuf,
    ratings_path: PathBuf,
    config: ReviewConfig,
    workers: Option<HashSet<String>>,
    state: RwLock<Arc<Snapshot>>,
    write_lock: Mutex<()>,
}

impl ReviewStore {
    pub fn open(workspace_dir: &Path, config: ReviewConfig) -> Result<Self, ReviewError> {
        config.validate()?;
        let cards_path = workspace_dir.join(CARDS_FILE);
        let ratings_path = workspace_dir.join(RATINGS_FILE);
        let cards = cards::read_cards(&cards_path)?
            .into_iter()
            .map(|c| (c.chart_id.clone(), c))
            .collect();
        let ratings: Vec<Rating> = if ratings_path.exists() {
            workspace::read_jsonl(&ratings_path)?
        } else {
            Vec::new()
        };
        let rated = ratings
            .iter()
            .map(|r| (r.card_id.clone(), r.worker_id.clone()))
            .collect();
        Ok(ReviewStore {
            cards_path,
            ratings_path,
            config,
            workers: None,
            state: RwLock::new(Arc::new(Snapshot { cards, ratings, rated })),
            write_lock: Mutex::new(()),
        })
    }

    /// Restricts queues and submissions to the listed workers.
    pub fn with_worker_registry(mut self, workers: impl IntoIterator<Item = String>) -> Self {
        self.workers = Some(workers.into_iter().collect());
        self
    }

    pub fn config(&self) -> &ReviewConfig {
        &self.config
    }

    fn snapshot(&self) -> Arc<Snapshot> {
        self.state.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn check_worker(&self, worker_id: &str) -> Result<(), ReviewError> {
        match &self.workers {
            Some(w) if !w.contains(worker_id) => Err(ReviewError::UnknownWorker(worker_id.to_string())),
            _ => Ok(()),
        }
    }

    pub fn card_count(&self) -> usize {
        self.snapshot().cards.len()
    }

    pub fn ratings(&self) -> Vec<Rating> {
        self.snapshot().ratings.clone()
    }

    pub fn review_status(&self, card_id: &str) -> Option<ReviewStatus> {
        self.snapshot().cards.get(card_id).map(|c| c.review)
    }

    /// Cards this worker has not rated, by ascending card id.
    pub fn list_pending(&self, worker_id: &str, limit: usize) -> Result<Vec<ReviewItem>, ReviewError> {
        self.check_worker(worker_id)?;
        let snap = self.snapshot();
        Ok(snap
            .cards
            .values()
            .filter(|c| !snap.rated.contains(&(c.chart_id.clone(), worker_id.to_string())))
            .take(limit)
            .map(|c| ReviewItem {
                card_id: c.chart_id.clone(),
                captions: c.captions.clone(),
                spec_summary: format!(
                    "{} chart of {} ({})",
                    c.spec.chart_type.display_name(),
                    c.spec.distinct_fields().join(", "),
                    c.spec.title
                ),
                vega_lite: c
                    .code
                    .get(&CodeGrammar::VegaLite)
                    .and_then(|e| e.artifact())
                    .and_then(|a| serde_json::from_str(&a.text).ok()),
            })
            .collect())
    }

    pub fn submit(&self, sub: RatingSubmission) -> Result<Rating, ReviewError> {
        let rating = Rating {
            card_id: sub.card_id,
            worker_id: sub.worker_id,
            scores: sub.scores,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        };
        self.submit_rating(rating.clone())?;
        Ok(rating)
    }

    /// Validates and appends one rating.
    pub fn submit_rating(&self, rating: Rating) -> Result<(), ReviewError> {
        self.check_worker(&rating.worker_id)?;
        rating.scores.validate()?;
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let snap = self.snapshot();
        if !snap.cards.contains_key(&rating.card_id) {
            return Err(ReviewError::UnknownCard(rating.card_id));
        }
        let key = (rating.card_id.clone(), rating.worker_id.clone());
        if snap.rated.contains(&key) {
            return Err(ReviewError::DuplicateRating {
                card_id: rating.card_id,
                worker_id: rating.worker_id,
            });
        }
        workspace::append_jsonl(&self.ratings_path, &rating)?;
        let mut ratings = snap.ratings.clone();
        ratings.push(rating);
        let mut rated = snap.rated.clone();
        rated.insert(key);
        *self.state.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(Snapshot {
            cards: snap.cards.clone(),
            ratings,
            rated,
        });
        Ok(())
    }

    /// Recomputes every verdict from the ratings log and writes the
    /// resulting review statuses back to the card store. Cards with fewer
    /// than `min_raters` ratings stay unreviewed.
    pub fn aggregate_verdicts(&self) -> Result<Vec<ReviewVerdict>, ReviewError> {
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let snap = self.snapshot();
        let mut by_card: BTreeMap<&str, Vec<&Rating>> = BTreeMap::new();
        for r in &snap.ratings {
            by_card.entry(&r.card_id).or_default().push(r);
        }
        let verdicts: Vec<ReviewVerdict> = by_card
            .iter()
            .map(|(id, rs)| verdict(id, rs, &self.config))
            .collect();

        let mut cards = snap.cards.clone();
        for card in cards.values_mut() {
            card.review = ReviewStatus::Unreviewed;
        }
        for v in &verdicts {
            if v.rating_count < self.config.min_raters {
                continue;
            }
            if let Some(card) = cards.get_mut(&v.card_id) {
                card.set_review(if v.passed { ReviewStatus::Passed } else { ReviewStatus::Failed })?;
            }
        }
        let list: Vec<MetadataCard> = cards.values().cloned().collect();
        cards::write_cards(&self.cards_path, &list)?;
        *self.state.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(Snapshot {
            cards,
            ratings: snap.ratings.clone(),
            rated: snap.rated.clone(),
        });
        Ok(verdicts)
    }

    pub fn stats(&self) -> ReviewStats {
        let snap = self.snapshot();
        let mut histograms: BTreeMap<String, [u64; 5]> =
            CRITERIA.iter().map(|c| (c.to_string(), [0; 5])).collect();
        let mut passing = 0usize;
        for r in &snap.ratings {
            for (c, v) in CRITERIA.iter().zip(r.scores.values()) {
                histograms.get_mut(*c).expect("criterion")[(v - 1) as usize] += 1;
            }
            if r.scores.values().iter().all(|v| *v as f64 >= self.config.threshold) {
                passing += 1;
            }
        }
        let n = snap.ratings.len();
        let pass_rate = (n > 0).then(|| 100.0 * passing as f64 / n as f64);
        let mut cards = BTreeMap::new();
        for c in snap.cards.values() {
            let k = match c.review {
                ReviewStatus::Unreviewed => "unreviewed",
                ReviewStatus::Passed => "passed",
                ReviewStatus::Failed => "failed",
            };
            *cards.entry(k.to_string()).or_insert(0) += 1;
        }
        ReviewStats {
            rating_count: n,
            histograms,
            pass_rate,
            pass_rate_defined: pass_rate.is_some(),
            cards,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rating(scores: Scores) -> Rating {
        Rating {
            card_id: "c".into(),
            worker_id: "w".into(),
            scores,
            timestamp: String::new(),
        }
    }

    #[test]
    fn midpoint_median() {
        assert_eq!(median(&[2.0, 4.0]), Some(3.0));
        assert_eq!(median(&[5.0, 1.0, 3.0]), Some(3.0));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn verdict_boundaries() {
        let cfg = ReviewConfig::default();
        let all3 = rating(Scores::uniform(3));
        assert!(verdict("c", &[&all3], &cfg).passed);

        let a = rating(Scores { completeness: 2, ..Scores::uniform(4) });
        let b = rating(Scores { completeness: 4, ..Scores::uniform(4) });
        let v = verdict("c", &[&a, &b], &cfg);
        assert_eq!(v.medians.completeness, 3.0);
        assert!(v.passed);

        let low = rating(Scores { diversity: 2, ..Scores::uniform(5) });
        assert!(!verdict("c", &[&low], &cfg).passed);

        let strict = ReviewConfig { min_raters: 2, ..cfg };
        assert!(!verdict("c", &[&all3], &strict).passed);
    }

    #[test]
    fn score_range() {
        assert!(Scores::uniform(5).validate().is_ok());
        assert!(matches!(
            Scores { readability: 6, ..Scores::uniform(3) }.validate(),
            Err(ReviewError::ScoreOutOfRange { criterion: "readability", value: 6 })
        ));
        assert!(Scores::uniform(0).validate().is_err());
    }
}
