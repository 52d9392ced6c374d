//! Core library for producing and checking LLM-written image captioning
//! models.

pub mod contract;
pub mod gateway;
pub mod metrics;
pub mod pipeline;
pub mod prompt;
pub mod python;
pub mod recovery;
pub mod registry;
pub mod smoke;

pub use contract::{check, classify_decoder, explain, CheckConfig, ContractReport, DecoderType, RuleId, Severity, Violation};
pub use gateway::{ChatRequest, ChatResponse, Completer, FinishReason, GatewayError, HttpGateway, ReplayGateway};
pub use metrics::{bleu4, tokenize, BleuBreakdown, TokenSeq};
pub use pipeline::{run_batch, BatchSummary, GeneratorMode, PipelineConfig};
pub use prompt::{assemble_prompt, family_prefix, prompt_hash, PromptSpec, PromptText, SnippetRecord, SnippetRole};
pub use python::SyntaxFailure;
pub use recovery::{sanitize, CandidateSource, Origin, PassRecord, SanitizeConfig};
pub use registry::{AttemptRecord, FamilyRow, FamilySummary, MetricRecord, RunRecord, Status, Store, SuccessPredicate};
pub use smoke::{Capability, SmokeReport, SmokeRequest, SmokeRunner, SmokeStatus};
