"""Failure types raised by the optimization stages."""


class PipelineError(RuntimeError):
    """A stage cannot start or continue for a non-numeric reason."""


class NumericHalt(PipelineError):
    """Parameters or losses became non-finite; message names the last
    good checkpoint when one exists."""


class ExtractionStall(PipelineError):
    """Surface extraction produced empty meshes for too many consecutive
    iterations, so no gradient signal is reaching the geometry."""
