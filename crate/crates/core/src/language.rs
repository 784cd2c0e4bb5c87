//! The eighteen language codes accepted by the pipeline.

/// ISO 639-1 codes in alphabetical order. The position of a code in this
/// array is its `languageIndex` feature value.
pub const SUPPORTED_LANGUAGES: [&str; 18] = [
    "ar", "da", "de", "el", "en", "es", "fi", "fr", "it", "ja", "nl", "no", "pl", "pt", "ru", "sv",
    "tr", "zh",
];

/// Categorical code of a supported language, or `None`.
pub fn language_index(code: &str) -> Option<usize> {
    SUPPORTED_LANGUAGES.binary_search(&code).ok()
}

pub fn is_supported(code: &str) -> bool {
    language_index(code).is_some()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_sorted_and_unique() {
        assert!(SUPPORTED_LANGUAGES.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn index_lookup() {
        assert_eq!(language_index("ar"), Some(0));
        assert_eq!(language_index("en"), Some(4));
        assert_eq!(language_index("zh"), Some(17));
        assert_eq!(language_index("xx"), None);
        assert!(!is_supported("EN"));
    }
}
