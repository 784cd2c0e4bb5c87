//! Synthetic tweet corpus with a known generative process.
//!
//! Retweet totals are Poisson draws whose log-rate is a declared linear
//! function of author and content attributes plus Gaussian noise:
//!
//! ```text
//! ln λ = b0 + followers·(ln(followers+1) - 5.5) + verified·[verified]
//!        + media·media_count + hashtags·hashtags_count + urls·url_count
//!        + quote·[is_quote] + noise·N(0, 1)
//! ```
//!
//! Temporal and language attributes, and the remaining author counts, carry
//! no signal. The intercept `b0` is solved by bisection so that the expected
//! share of zero-retweet rows, `mean(exp(-λ))`, hits `zero_fraction`.

use std::io::Write;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::LexiconSentiment;
use crate::language;
use crate::store::{ComplianceRequest, TweetRecord};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Log-rate coefficients of the generative process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Coefficients {
    /// Per unit of `ln(followers + 1)`, centred at 5.5.
    pub followers: f64,
    pub verified: f64,
    pub media: f64,
    pub hashtags: f64,
    pub urls: f64,
    pub quote: f64,
}

impl Default for Coefficients {
    fn default() -> Self {
        Coefficients {
            followers: 1.25,
            verified: 1.5,
            media: 2.5,
            hashtags: 1.5,
            urls: 1.5,
            quote: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub n_rows: usize,
    pub seed: u64,
    pub coefficients: Coefficients,
    /// Standard deviation of the Gaussian log-rate noise.
    pub noise: f64,
    /// Target expected share of rows with zero retweets.
    pub zero_fraction: f64,
    /// Average number of tweets per author.
    pub tweets_per_author: f64,
    /// `(language code, weight)` pairs.
    pub language_mix: Vec<(String, f64)>,
}

/// Rates are capped here so Poisson draws stay finite and fast.
const MAX_RATE: f64 = 1e9;

impl Default for SynthSpec {
    fn default() -> Self {
        let mix = [
            ("en", 0.40),
            ("ja", 0.12),
            ("es", 0.10),
            ("pt", 0.06),
            ("ar", 0.05),
            ("tr", 0.04),
            ("fr", 0.04),
            ("ru", 0.03),
            ("de", 0.03),
            ("it", 0.02),
            ("nl", 0.02),
            ("pl", 0.02),
            ("zh", 0.02),
            ("sv", 0.01),
            ("fi", 0.01),
            ("da", 0.01),
            ("no", 0.01),
            ("el", 0.01),
        ];
        SynthSpec {
            n_rows: 50_000,
            seed: 0,
            coefficients: Coefficients::default(),
            noise: 0.2,
            zero_fraction: 0.83,
            tweets_per_author: 4.0,
            language_mix: mix.iter().map(|(c, w)| (c.to_string(), *w)).collect(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.n_rows == 0 {
            return bad("n_rows must be at least 1".into());
        }
        let c = &self.coefficients;
        if [c.followers, c.verified, c.media, c.hashtags, c.urls, c.quote]
            .iter()
            .any(|v| !v.is_finite())
        {
            return bad("coefficients must be finite".into());
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be finite and non-negative".into());
        }
        if !(self.zero_fraction > 0.0 && self.zero_fraction < 1.0) {
            return bad("zero_fraction must lie in (0, 1)".into());
        }
        if !(self.tweets_per_author >= 1.0 && self.tweets_per_author.is_finite()) {
            return bad("tweets_per_author must be at least 1".into());
        }
        if self.language_mix.is_empty() {
            return bad("language_mix is empty".into());
        }
        for (code, w) in &self.language_mix {
            if !language::is_supported(code) {
                return bad(format!("unsupported language {code:?}"));
            }
            if !(*w >= 0.0 && w.is_finite()) {
                return bad(format!("bad weight {w} for {code}"));
            }
        }
        if self.language_mix.iter().all(|(_, w)| *w == 0.0) {
            return bad("language weights are all zero".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub records: Vec<TweetRecord>,
    /// Solved intercept `b0`.
    pub intercept: f64,
    /// Expected zero share under the solved intercept.
    pub expected_zero_fraction: f64,
}

impl Synthetic {
    pub fn observed_zero_fraction(&self) -> f64 {
        self.records.iter().filter(|r| r.retweet_total == 0).count() as f64 / self.records.len() as f64
    }
}

struct Author {
    id: String,
    log_followers: f64,
    followers: u64,
    friends: u64,
    statuses: u64,
    favorites: u64,
    listed: u64,
    verified: bool,
    created_at: DateTime<Utc>,
}

fn pick<R: Rng>(rng: &mut R, probs: &[f64]) -> u64 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i as u64;
        }
    }
    (probs.len() - 1) as u64
}

fn lognormal_count<R: Rng>(rng: &mut R, mu: f64, sigma: f64) -> u64 {
    let z: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
    (mu + sigma * z).exp().round() as u64
}

fn author<R: Rng>(rng: &mut R, idx: usize, epoch: DateTime<Utc>) -> Author {
    let normal: Normal<f64> = Normal::new(0.0, 1.0).expect("unit normal");
    let lf: f64 = (5.5 + 2.0 * normal.sample(rng)).clamp(0.0, 17.0);
    let listed_log: f64 = (0.6 * lf - 1.5 + normal.sample(rng)).max(0.0);
    let p_verified = 1.0 / (1.0 + (-(lf - 11.0)).exp());
    let age_days = rng.random_range(1..=3650);
    let age_secs = rng.random_range(0..86_400);
    Author {
        id: format!("u{idx:08}"),
        log_followers: lf,
        followers: (lf.exp() - 1.0).round() as u64,
        friends: lognormal_count(rng, 5.0, 1.5),
        statuses: lognormal_count(rng, 8.0, 1.5),
        favorites: lognormal_count(rng, 7.0, 2.0),
        listed: (listed_log.exp() - 1.0).round() as u64,
        verified: rng.random_bool(p_verified),
        created_at: epoch - Duration::days(age_days) - Duration::seconds(age_secs),
    }
}

fn text<R: Rng>(rng: &mut R, code: &str) -> String {
    let (pos, neg) = LexiconSentiment::words(code).expect("validated language");
    let n = rng.random_range(3..=8);
    let words: Vec<String> = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            if u < 0.15 {
                pos[rng.random_range(0..pos.len())].to_string()
            } else if u < 0.30 {
                neg[rng.random_range(0..neg.len())].to_string()
            } else {
                format!("w{}", rng.random_range(0..1000))
            }
        })
        .collect();
    words.join(" ")
}

/// Zero-mass of the mixture as a function of the intercept.
fn expected_zero(b0: f64, latent: &[f64]) -> f64 {
    latent
        .iter()
        .map(|eta| (-(b0 + eta).exp().min(MAX_RATE)).exp())
        .sum::<f64>()
        / latent.len() as f64
}

/// Solves `expected_zero(b0) = target` by bisection; the left side is
/// decreasing in `b0`.
fn solve_intercept(latent: &[f64], target: f64) -> f64 {
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected_zero(mid, latent) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Generates the corpus. Output depends only on `spec`.
pub fn generate(spec: &SynthSpec) -> Result<Synthetic, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let epoch = Utc.with_ymd_and_hms(2017, 1, 1, 0, 0, 0).single().expect("valid date");
    let year_secs = 365 * 86_400;

    let n_authors = ((spec.n_rows as f64 / spec.tweets_per_author).ceil() as usize).max(1);
    let authors: Vec<Author> = (0..n_authors).map(|i| author(&mut rng, i, epoch)).collect();
    let languages = WeightedIndex::new(spec.language_mix.iter().map(|(_, w)| *w))
        .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    let normal: Normal<f64> = Normal::new(0.0, 1.0).expect("unit normal");
    let c = &spec.coefficients;

    let mut records = Vec::with_capacity(spec.n_rows);
    let mut latent = Vec::with_capacity(spec.n_rows);
    for i in 0..spec.n_rows {
        let a = &authors[rng.random_range(0..n_authors)];
        let media = pick(&mut rng, &[0.55, 0.25, 0.10, 0.06, 0.04]);
        let hashtags = pick(&mut rng, &[0.50, 0.20, 0.12, 0.08, 0.06, 0.04]);
        let urls = pick(&mut rng, &[0.6, 0.3, 0.1]);
        let quote = rng.random_bool(0.15);
        let mentions = pick(&mut rng, &[0.4, 0.3, 0.15, 0.1, 0.05]);
        let symbols = u64::from(rng.random_bool(0.05));
        let lang = &spec.language_mix[languages.sample(&mut rng)].0;
        let posted_at = epoch + Duration::seconds(rng.random_range(0..year_secs));
        let eta = c.followers * (a.log_followers - 5.5)
            + c.verified * f64::from(u8::from(a.verified))
            + c.media * media as f64
            + c.hashtags * hashtags as f64
            + c.urls * urls as f64
            + c.quote * f64::from(u8::from(quote))
            + spec.noise * normal.sample(&mut rng);
        latent.push(eta);
        records.push(TweetRecord {
            id: format!("t{i:09}"),
            author_id: a.id.clone(),
            followers_count: a.followers,
            friends_count: a.friends,
            statuses_count: a.statuses,
            actor_favorites_count: a.favorites,
            actor_listed_count: a.listed,
            actor_verified: a.verified,
            account_created_at: a.created_at,
            posted_at,
            is_quote: quote,
            mention_count: mentions,
            hashtags_count: hashtags,
            media_count: media,
            url_count: urls,
            symbol_count: symbols,
            language_code: lang.clone(),
            text: text(&mut rng, lang),
            retweet_total: 0,
            favorite_total: 0,
        });
    }

    let b0 = solve_intercept(&latent, spec.zero_fraction);
    for (r, eta) in records.iter_mut().zip(&latent) {
        let rate = (b0 + eta).exp().min(MAX_RATE);
        r.retweet_total = Poisson::new(rate).expect("positive finite rate").sample(&mut rng) as u64;
        let fav_rate = (1.5 * rate).min(MAX_RATE);
        r.favorite_total = Poisson::new(fav_rate).expect("positive finite rate").sample(&mut rng) as u64;
    }
    Ok(Synthetic {
        records,
        intercept: b0,
        expected_zero_fraction: expected_zero(b0, &latent),
    })
}

/// Deletion directives against a generated corpus: each document with
/// probability `status_rate`, each distinct author with `user_rate`.
pub fn compliance_requests(
    records: &[TweetRecord],
    status_rate: f64,
    user_rate: f64,
    seed: u64,
) -> Vec<ComplianceRequest> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let received = Utc.with_ymd_and_hms(2018, 6, 1, 0, 0, 0).single().expect("valid date");
    let mut out = Vec::new();
    let mut authors: Vec<&str> = records.iter().map(|r| r.author_id.as_str()).collect();
    authors.sort_unstable();
    authors.dedup();
    for r in records {
        if rng.random_bool(status_rate.clamp(0.0, 1.0)) {
            out.push(ComplianceRequest::delete_status(&r.id, received + Duration::seconds(out.len() as i64)));
        }
    }
    for a in authors {
        if rng.random_bool(user_rate.clamp(0.0, 1.0)) {
            out.push(ComplianceRequest::delete_user(a, received + Duration::seconds(out.len() as i64)));
        }
    }
    out
}

/// One JSON document per line.
pub fn write_jsonl<T: Serialize, W: Write>(items: &[T], mut out: W) -> Result<(), SynthError> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SynthSpec {
        SynthSpec {
            n_rows: 2000,
            seed,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn empty_spec_is_rejected() {
        let spec = SynthSpec { n_rows: 0, ..SynthSpec::default() };
        assert!(matches!(generate(&spec), Err(SynthError::InvalidSpec(_))));
        let spec = SynthSpec {
            language_mix: vec![("xx".into(), 1.0)],
            ..small(0)
        };
        assert!(generate(&spec).is_err());
    }

    #[test]
    fn fixed_seed_is_byte_identical() {
        let a = generate(&small(3)).unwrap();
        let b = generate(&small(3)).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        write_jsonl(&a.records, &mut x).unwrap();
        write_jsonl(&b.records, &mut y).unwrap();
        assert_eq!(x, y);
        let c = generate(&small(4)).unwrap();
        let mut z = Vec::new();
        write_jsonl(&c.records, &mut z).unwrap();
        assert_ne!(x, z);
    }

    #[test]
    fn records_are_valid() {
        let s = generate(&small(5)).unwrap();
        assert_eq!(s.records.len(), 2000);
        for r in &s.records {
            r.validate().unwrap();
        }
        let mut ids: Vec<_> = s.records.iter().map(|r| &r.id).collect();
        ids.dedup();
        assert_eq!(ids.len(), 2000);
    }

    #[test]
    fn intercept_hits_the_expected_zero_share() {
        let s = generate(&small(6)).unwrap();
        assert!((s.expected_zero_fraction - 0.83).abs() < 1e-9);
        let observed = s.observed_zero_fraction();
        assert!((observed - 0.83).abs() < 0.03, "{observed}");
    }

    #[test]
    fn compliance_requests_target_existing_ids() {
        let s = generate(&small(7)).unwrap();
        let reqs = compliance_requests(&s.records, 0.05, 0.02, 1);
        assert!(!reqs.is_empty());
        for r in &reqs {
            r.validate().unwrap();
        }
        assert_eq!(reqs, compliance_requests(&s.records, 0.05, 0.02, 1));
    }
}
