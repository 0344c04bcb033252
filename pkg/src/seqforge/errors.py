"""Exception hierarchy for the pipeline.

Every stage raises a subclass of SeqforgeError so that the orchestrator can
catch per-sequence failures without swallowing programming errors.
"""


class SeqforgeError(Exception):
    """Base class for all pipeline errors."""


# --- parsing (oeis) ---

class MalformedLine(SeqforgeError):
    def __init__(self, message, line_number=None):
        super().__init__(message if line_number is None else f"line {line_number}: {message}")
        self.line_number = line_number


class MissingTerms(SeqforgeError):
    pass


class NonContiguousIndex(SeqforgeError):
    pass


class MalformedPair(SeqforgeError):
    def __init__(self, message, line_number=None):
        super().__init__(message if line_number is None else f"line {line_number}: {message}")
        self.line_number = line_number


class OverlapMismatch(SeqforgeError):
    pass


# --- agents ---

class TemplateBindingMissing(SeqforgeError):
    pass


class TransportError(SeqforgeError):
    """A single failed request attempt (retryable)."""


class TransportExhausted(SeqforgeError):
    """All retry attempts failed."""


class ScriptMiss(SeqforgeError):
    """Mock backend received a request it has no scripted reply for."""


class AgentParseError(SeqforgeError):
    """Agent reply did not match the required reply grammar."""


# --- problem generation ---

class CaseCountViolation(SeqforgeError):
    pass


class CaseInconsistentWithSequence(SeqforgeError):
    pass


# --- supervision ---

class NoCodeBlock(SeqforgeError):
    pass


class MultipleCodeBlocks(SeqforgeError):
    pass


class SandboxUnavailable(SeqforgeError):
    """Runner process crashed and could not be restarted."""


# --- dataset ---

class EmptyCorpus(SeqforgeError):
    pass


# --- eval ---

class InsufficientHeldOut(SeqforgeError):
    pass


class ShotOverlap(SeqforgeError):
    pass


# --- pipeline ---

class ConfigInvalid(SeqforgeError):
    pass


class CheckpointCorrupt(SeqforgeError):
    pass
