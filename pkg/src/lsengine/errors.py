"""Exception types. Every error carries a stable ``code`` string used by the CLI."""


class LSEngineError(Exception):
    code = "LSE_ERROR"


class CacheError(LSEngineError):
    code = "LSE_CACHE"


class ParameterError(LSEngineError):
    code = "LSE_PARAMS"


class TableError(LSEngineError):
    code = "LSE_TABLE"


class PropagationError(LSEngineError):
    code = "LSE_PROPAGATE"


class DecodeError(LSEngineError):
    code = "LSE_DECODE"


class FormatError(LSEngineError):
    code = "LSE_FORMAT"


class UnsupportedError(LSEngineError):
    code = "LSE_UNSUPPORTED"
