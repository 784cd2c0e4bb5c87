//! Sentiment scoring.
//!
//! [`SentimentProvider`] abstracts the scoring service. [`LexiconSentiment`]
//! is a deterministic stand-in: the share of positive over negative lexicon
//! hits, mapped from [-1, 1] onto [0, 1]. Text without hits scores 0.5.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SentimentError {
    #[error("unsupported language {0:?}")]
    UnsupportedLanguage(String),
}

pub trait SentimentProvider: Send + Sync {
    /// Identifies the scorer so that stored scores can be traced to it.
    fn version(&self) -> &str;

    /// Returns a score in `[0, 1]`; must be deterministic for a given version.
    fn score(&self, text: &str, language_code: &str) -> Result<f64, SentimentError>;
}

/// Lexicon entries per language as (positive, negative) word lists.
fn lexicon(code: &str) -> Option<(&'static [&'static str], &'static [&'static str])> {
    let entry: (&[&str], &[&str]) = match code {
        "ar" => (
            &["جيد", "رائع", "حب", "سعيد", "ممتاز", "جميل", "أفضل"],
            &["سيء", "فظيع", "كره", "حزين", "مروع", "أسوأ", "غاضب"],
        ),
        "da" => (
            &["god", "fantastisk", "kærlighed", "glad", "fremragende", "dejlig", "bedst"],
            &["dårlig", "forfærdelig", "had", "trist", "frygtelig", "værst", "vred"],
        ),
        "de" => (
            &["gut", "toll", "liebe", "glücklich", "ausgezeichnet", "wunderbar", "beste"],
            &["schlecht", "schrecklich", "hass", "traurig", "furchtbar", "schlimmste", "wütend"],
        ),
        "el" => (
            &["καλό", "υπέροχο", "αγάπη", "χαρούμενος", "εξαιρετικό", "τέλειο", "καλύτερο"],
            &["κακό", "απαίσιο", "μίσος", "λυπημένος", "φρικτό", "χειρότερο", "θυμωμένος"],
        ),
        "en" => (
            &["good", "great", "love", "happy", "excellent", "amazing", "best", "win", "awesome"],
            &["bad", "terrible", "hate", "sad", "awful", "worst", "fail", "angry", "horrible"],
        ),
        "es" => (
            &["bueno", "genial", "amor", "feliz", "excelente", "increíble", "mejor"],
            &["malo", "terrible", "odio", "triste", "horrible", "peor", "enojado"],
        ),
        "fi" => (
            &["hyvä", "mahtava", "rakkaus", "iloinen", "erinomainen", "upea", "paras"],
            &["huono", "kamala", "viha", "surullinen", "hirveä", "pahin", "vihainen"],
        ),
        "fr" => (
            &["bon", "génial", "amour", "heureux", "excellent", "magnifique", "meilleur"],
            &["mauvais", "terrible", "haine", "triste", "horrible", "pire", "colère"],
        ),
        "it" => (
            &["buono", "fantastico", "amore", "felice", "eccellente", "bellissimo", "migliore"],
            &["cattivo", "terribile", "odio", "triste", "orribile", "peggiore", "arrabbiato"],
        ),
        "ja" => (
            &["良い", "最高", "好き", "嬉しい", "素晴らしい", "楽しい", "幸せ"],
            &["悪い", "最悪", "嫌い", "悲しい", "ひどい", "怖い", "怒り"],
        ),
        "nl" => (
            &["goed", "geweldig", "liefde", "blij", "uitstekend", "prachtig", "beste"],
            &["slecht", "verschrikkelijk", "haat", "verdrietig", "vreselijk", "slechtste", "boos"],
        ),
        "no" => (
            &["god", "flott", "kjærlighet", "glad", "utmerket", "fantastisk", "best"],
            &["dårlig", "forferdelig", "hat", "trist", "fryktelig", "verst", "sint"],
        ),
        "pl" => (
            &["dobry", "świetny", "miłość", "szczęśliwy", "doskonały", "wspaniały", "najlepszy"],
            &["zły", "okropny", "nienawiść", "smutny", "straszny", "najgorszy", "wściekły"],
        ),
        "pt" => (
            &["bom", "ótimo", "amor", "feliz", "excelente", "incrível", "melhor"],
            &["ruim", "terrível", "ódio", "triste", "horrível", "pior", "raiva"],
        ),
        "ru" => (
            &["хорошо", "отлично", "любовь", "счастлив", "прекрасно", "лучший", "класс"],
            &["плохо", "ужасно", "ненависть", "грустно", "кошмар", "худший", "злой"],
        ),
        "sv" => (
            &["bra", "underbar", "kärlek", "glad", "utmärkt", "fantastisk", "bäst"],
            &["dålig", "hemsk", "hat", "ledsen", "fruktansvärd", "sämst", "arg"],
        ),
        "tr" => (
            &["iyi", "harika", "sevgi", "mutlu", "mükemmel", "güzel", "süper"],
            &["kötü", "berbat", "nefret", "üzgün", "korkunç", "rezil", "kızgın"],
        ),
        "zh" => (
            &["好", "棒", "喜欢", "开心", "优秀", "美丽", "幸福"],
            &["坏", "差", "讨厌", "伤心", "糟糕", "可怕", "生气"],
        ),
        _ => return None,
    };
    Some(entry)
}

/// Languages written without spaces are matched by substring.
fn unsegmented(code: &str) -> bool {
    matches!(code, "ja" | "zh")
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LexiconSentiment;

impl LexiconSentiment {
    pub const VERSION: &'static str = "lexicon-v1";

    /// The positive and negative word lists for `code`.
    pub fn words(code: &str) -> Option<(&'static [&'static str], &'static [&'static str])> {
        lexicon(code)
    }
}

impl SentimentProvider for LexiconSentiment {
    fn version(&self) -> &str {
        Self::VERSION
    }

    fn score(&self, text: &str, language_code: &str) -> Result<f64, SentimentError> {
        let (pos, neg) = lexicon(language_code)
            .ok_or_else(|| SentimentError::UnsupportedLanguage(language_code.to_string()))?;
        let lower = text.to_lowercase();
        let (p, n) = if unsegmented(language_code) {
            let count = |words: &[&str]| words.iter().map(|w| lower.matches(w).count()).sum::<usize>();
            (count(pos), count(neg))
        } else {
            let mut p = 0usize;
            let mut n = 0usize;
            for token in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
                if pos.contains(&token) {
                    p += 1;
                }
                if neg.contains(&token) {
                    n += 1;
                }
            }
            (p, n)
        };
        if p + n == 0 {
            return Ok(0.5);
        }
        let signed = (p as f64 - n as f64) / (p + n) as f64;
        Ok((signed + 1.0) / 2.0)
    }
}
