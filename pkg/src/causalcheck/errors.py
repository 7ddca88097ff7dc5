"""Exception hierarchy shared across the engine.

Every error raised by causalcheck derives from :class:`CausalCheckError`,
so callers (and the CLI) can catch one type and map it to a non-zero exit
code. Validation problems that are *data findings* rather than caller
mistakes (e.g. a negative cell count discovered while screening a table)
are reported through return values, not exceptions; see
``study.validate_table``.
"""

from __future__ import annotations


class CausalCheckError(Exception):
    """Base class for all engine errors."""


class SchemaError(CausalCheckError):
    """Input file does not conform to the study-file schema.

    ``path`` is a JSON-pointer-ish location of the offending field,
    e.g. ``studies[0].table.a``.
    """

    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.path = path


class ValidationError(CausalCheckError):
    """A domain object violates one of its structural invariants."""


class CovariateMismatch(CausalCheckError):
    """A covariate profile names different covariates than the study."""


class DesignError(CausalCheckError):
    """Operation undefined for this study design (e.g. RR on case-control)."""


class DegenerateError(CausalCheckError):
    """Table or configuration carries no information for the requested measure."""


class DomainError(CausalCheckError):
    """Numeric argument outside the mathematical domain of the operation."""


class InfeasibleCorrection(CausalCheckError):
    """Misclassification back-correction produced a negative count."""

    def __init__(self, cell: str, value: float):
        super().__init__(
            f"corrected count for cell '{cell}' is negative ({value:.6g}); "
            "the misclassification parameters are inconsistent with the data"
        )
        self.cell = cell
        self.value = value


class MixedDesignError(CausalCheckError):
    """Strata of one study disagree on design; pooling is undefined."""


class InsufficientStudies(CausalCheckError):
    """Fewer studies supplied than the synthesis operation requires."""


class ConfigError(CausalCheckError):
    """A threshold or significance level is outside its sensible range."""


class ArityError(CausalCheckError):
    """Wrong number of checklist outcomes supplied."""


class NegativeInteraction(CausalCheckError):
    """Joint relative risk is sub-additive; the synergy partition is undefined."""


class DegenerateWeights(CausalCheckError):
    """All allocation weights are zero."""


class AllZeroMass(CausalCheckError):
    """Every company in a scenario has zero posterior mass."""


class RiskOverflow(CausalCheckError):
    """A composite risk in a simulation truth reaches or exceeds 1."""


class EnumerationBound(CausalCheckError):
    """Table total exceeds the exact-enumeration bound."""
