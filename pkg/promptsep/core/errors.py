"""Exception hierarchy shared by every promptsep package"""


class SeparationError(Exception):
    """Base class for all promptsep failures"""


class SignalError(SeparationError, ValueError):
    """Audio or spectrogram input that breaks a signal-processing contract"""


class NonFiniteError(SeparationError, FloatingPointError):
    """A model stage produced NaN or Inf values"""

    def __init__(self, stage: str):
        super().__init__(f"non-finite values after stage '{stage}'")
        self.stage = stage


class PromptSetError(SeparationError, ValueError):
    """A prompt combination the model cannot accept"""

    def __init__(self, rule: str, message: str):
        super().__init__(message)
        self.rule = rule


class ManifestError(SeparationError, ValueError):
    """Malformed corpus manifest or recipe file"""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(SeparationError, ValueError):
    """One or more invalid configuration values, reported together"""

    def __init__(self, problems: list[str] | str):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("invalid configuration:\n - " + "\n - ".join(self.problems))


class CheckpointError(SeparationError):
    """Checkpoint archive that cannot be read or does not fit the model"""


class TrainingError(SeparationError):
    """Training aborted at a known epoch/step position"""

    def __init__(self, message: str, epoch: int, step: int):
        super().__init__(f"[epoch {epoch}, step {step}] {message}")
        self.epoch = epoch
        self.step = step
