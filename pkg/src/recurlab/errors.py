"""Exception types shared across recurlab."""


class RecurlabError(Exception):
    """Base class for all library errors."""


class InvalidDimension(RecurlabError, ValueError):
    pass


class InvalidOperator(RecurlabError, ValueError):
    """A matrix failed the invariant required by its type (e.g. unitarity)."""


class InvalidArgument(RecurlabError, ValueError):
    pass


class DimensionMismatch(RecurlabError, ValueError):
    pass


class IndexOutOfRange(RecurlabError, IndexError):
    pass


class SizingError(RecurlabError, ValueError):
    """Requested problem exceeds a configured dense-simulation or search cap."""


class UnreachableConfidence(RecurlabError, ValueError):
    pass


class RankDeficiency(RecurlabError, ValueError):
    pass


class RankMismatch(RecurlabError, ValueError):
    pass


class NotWDSA(RecurlabError, ValueError):
    """The site set supports a nonzero measure with vanishing marginals."""


class PremiseViolation(RecurlabError, ValueError):
    pass


class SearchLimitExceeded(RecurlabError, RuntimeError):
    pass
