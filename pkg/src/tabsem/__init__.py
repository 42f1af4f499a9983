"""tabsem: HTML tables to semantic JSON with token-based context optimization."""

from .context_optimizer import (
    Codebook,
    CodebookEntry,
    EncodedTable,
    InvalidInput,
    JsonParseError,
    decode_json,
    decode_text,
    encode_table,
    restore_html,
    token_efficiency,
)
from .evaluator import (
    EmptyTable,
    EvalScores,
    LeafPath,
    QAItem,
    SemanticJson,
    evaluate_pair,
    extrinsic_score,
    generate_questions,
    intrinsic_score,
    json_elements,
    leaf_paths,
)
from .llm_gateway import (
    AuthError,
    BackendConfig,
    ChatRequest,
    ChatResponse,
    GatewayError,
    ProtocolError,
    RateLimited,
    ScriptExhausted,
    TransportError,
    complete,
    mock_script,
)
from .synthesizer import EmptyCompletion, PromptTemplate, default_template, synthesize
from .syntax_corrector import (
    CorrectionTrace,
    FailureMode,
    SyntaxDiagnosis,
    correct,
    validate_json,
)
from .table_ingest import (
    Cell,
    CleanTable,
    MalformedHtml,
    NoTableFound,
    RawTable,
    extract_cells,
    sanitize,
)
from .tokenizer import (
    TokenizerHandle,
    TokenSeq,
    VocabParseError,
    count_tokens,
    load_bpe,
    tokenize,
    whitespace_tokenizer,
)

__version__ = "0.1.0"
