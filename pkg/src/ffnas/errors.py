"""Exception types shared across the package."""


class FfnasError(Exception):
    """Base class for all package errors."""


class ShapeError(FfnasError):
    """Operand extents are incompatible."""


class ArityError(FfnasError):
    """Primitive applied to the wrong number of inputs."""


class ContractError(FfnasError):
    """An operation precondition was violated."""


class InputError(FfnasError):
    """Bad input data (out-of-vocab ids, empty datasets, ...)."""


class CapacityError(FfnasError):
    """Genotype exceeds the supernet's sliceable capacity."""


class ModeError(FfnasError):
    """Operation not allowed in the handle's current mode."""


class FrozenParameterError(ModeError):
    """Attempted to mutate parameters of a frozen supernet."""


class GenotypeParseError(FfnasError):
    """Malformed genotype text; carries the position of the defect."""

    def __init__(self, message, position=None):
        super().__init__(message if position is None else f"{message} (at {position})")
        self.position = position


class EmptySpaceError(FfnasError):
    """Search space is over-constrained and contains no genotype."""


class TrainingError(FfnasError):
    """Training diverged; carries the step index."""

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class ConfigError(FfnasError):
    """Run configuration violates the schema."""


class MissingArtifactError(FfnasError):
    """A required upstream artifact is missing; carries the path."""

    def __init__(self, path):
        super().__init__(f"missing required artifact: {path}")
        self.path = path
