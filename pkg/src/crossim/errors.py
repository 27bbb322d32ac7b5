"""Exception types raised across the package."""


class CrossimError(Exception):
    """Base class for all package-specific errors."""


# -- road geometry ---------------------------------------------------------

class DegenerateSpan(CrossimError):
    """Two consecutive control points coincide; the spline span is undefined."""


class GenerationExhausted(CrossimError):
    """Random road generation ran out of retries under the given constraints."""


# -- simulation ------------------------------------------------------------

class InvalidRoad(CrossimError):
    """A genotype decodes to a road that violates the validity constraints."""


# -- search / campaigns ----------------------------------------------------

class BudgetTooSmall(CrossimError):
    """Search budget is below the cost of evaluating one population."""


class ModelMissing(CrossimError):
    """The surrogate filter was enabled without a trained model."""


class UnknownOrigin(CrossimError):
    """A migrated test does not belong to either search run."""


# -- analysis / validation -------------------------------------------------

class BackendOverlap(CrossimError):
    """A held-out validation backend was already used during the search."""


class MissingCampaign(CrossimError):
    """A referenced campaign result file does not exist or cannot be read."""


# -- surrogate -------------------------------------------------------------

class SingleBackendCampaign(CrossimError):
    """Disagreement labels need campaigns that ran on at least two backends."""


class DegenerateDataset(CrossimError):
    """Training data is missing one of the two classes entirely."""


class FoldTooSmall(CrossimError):
    """Cross-validation folds cannot hold at least one row of each class."""


# -- statistics ------------------------------------------------------------

class EmptySample(CrossimError):
    """Effect size needs non-empty samples on both sides."""


class SampleTooSmall(CrossimError):
    """Rank-sum test needs at least three observations per sample."""


class PointBeyondReference(CrossimError):
    """A front point does not dominate the hypervolume reference point."""


# -- configuration / CLI ---------------------------------------------------

class ConfigError(CrossimError):
    """Campaign configuration failed validation.

    Carries one message per offending field so the CLI can print them all.
    """

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class InsufficientSeeds(CrossimError):
    """Statistical comparison needs >= 2 result groups with >= 3 seeds each."""
