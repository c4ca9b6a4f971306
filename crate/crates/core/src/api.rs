//! JSON bodies of the feedback service, shared by server and client.

use serde::{Deserialize, Serialize};

use crate::diagnostics::RawDiagnostic;
use crate::suggester::{ExamplePair, Suggestion};

/// Largest accepted program text.
pub const MAX_SOURCE_BYTES: usize = 256 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRequest {
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineFeedback {
    /// Opaque handle for fetching more examples for this line.
    pub line_token: String,
    #[serde(flatten)]
    pub suggestion: Suggestion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackResponse {
    pub compiled_ok: bool,
    pub diagnostics: Vec<RawDiagnostic>,
    pub suggestions: Vec<LineFeedback>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamplesResponse {
    pub line_token: String,
    pub offset: usize,
    pub examples: Vec<ExamplePair>,
    pub has_more: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub model_version: String,
    pub class_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suggester::Prediction;

    #[test]
    fn line_feedback_is_flat_snake_case() {
        let fb = LineFeedback {
            line_token: "abc".into(),
            suggestion: Suggestion {
                line_no: 5,
                diagnostics: vec!["use of undeclared identifier 'xyz'".into()],
                predicted: vec![Prediction {
                    class_id: 0,
                    probability: 0.5,
                    class_key: "E_1 +INT -INVALID".into(),
                }],
                example_class: Some(0),
                examples: vec![],
                has_more: false,
                cursor: None,
            },
        };
        let v: serde_json::Value = serde_json::to_value(&fb).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(
            keys,
            ["diagnostics", "example_class", "examples", "has_more", "line_no", "line_token", "predicted"]
        );
        let back: LineFeedback = serde_json::from_value(v).unwrap();
        assert_eq!(back, fb);
    }

    #[test]
    fn page_size_is_optional() {
        let req: FeedbackRequest = serde_json::from_str(r#"{"source":"int x;"}"#).unwrap();
        assert_eq!(req.page_size, None);
    }
}
