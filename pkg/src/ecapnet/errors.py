"""Exception hierarchy shared across the toolkit."""


class EcapNetError(Exception):
    """Base class for all toolkit errors."""


class ParseError(EcapNetError):
    """Malformed mesh or data file (bad header, count mismatch, bad record)."""


class ValidationError(EcapNetError):
    """Structurally valid file whose content violates a domain invariant."""


class ShapeMismatch(EcapNetError):
    """Tensor or graph shapes are not conformable for the requested op."""


class IndexOutOfRange(EcapNetError):
    """A node/edge index addresses outside the valid range."""


class DegenerateNormal(ValidationError):
    """Area-weighted normal sum has vanishing norm at some vertex."""


class ZeroAreaNeighborhood(ValidationError):
    """Barycentric one-ring area below the degeneracy floor."""


class ZeroScale(EcapNetError):
    """All edges have zero length; pseudo-coordinates undefined."""


class LengthMismatch(EcapNetError):
    """Paired sequences disagree in length."""


class EmptyBatch(EcapNetError):
    """A batch of zero graphs was requested."""


class OutOfDomain(EcapNetError):
    """Spline basis evaluated outside the unit cube."""


class DegenerateSeries(EcapNetError):
    """Wall-shear-stress series too short to integrate."""


class EmptyInput(EcapNetError):
    """Zero-length input where at least one element is required."""


class EmptyEvalSet(EcapNetError):
    """Evaluation requested on an empty sample set."""


class TooFewSamples(EcapNetError):
    """Dataset smaller than the number of requested folds."""


class NonFiniteLoss(EcapNetError):
    """Training loss became NaN/Inf; carries epoch/batch coordinates."""


class SelfIntersection(EcapNetError):
    """Shape-parameter draw could not produce an injective deformation."""


class ConfigError(EcapNetError):
    """Run configuration file is malformed or carries unknown keys."""
