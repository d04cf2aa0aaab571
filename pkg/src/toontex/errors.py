"""Exception taxonomy shared across modules.

The CLI maps these onto exit codes: ContractError -> 2,
ExternalServiceError -> 3. Plain usage mistakes exit 1.
"""


class ToontexError(Exception):
    """Base class for all package errors."""


class ContractError(ToontexError, ValueError):
    """An input violated a documented precondition or invariant."""


class ExternalServiceError(ToontexError, RuntimeError):
    """A pluggable external client (VQA, LLM, embedder, proxy image
    service) failed or returned an unusable response."""


class CaptionError(ExternalServiceError):
    """Captioning failed mid-dialogue. Carries the partial transcript."""

    def __init__(self, message, session=None):
        super().__init__(message)
        self.session = session
