"""Exception hierarchy shared by every pitchform stage."""
from typing import Optional, Tuple


class PitchformError(Exception):
    """Base class for all pipeline errors."""


# -------------------------------------------------------------------
# Gamestate
# -------------------------------------------------------------------

class IllegalDelta(PitchformError, ValueError):
    """A delta that no pitch could produce from the given state."""


class InconsistentStates(PitchformError, ValueError):
    """No legal delta maps one state onto the next."""


# -------------------------------------------------------------------
# Ingest
# -------------------------------------------------------------------

class SchemaMismatch(PitchformError, ValueError):
    """The CSV header is missing required columns."""

    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__(f"missing column(s): {', '.join(self.missing)}")


class RowError(PitchformError, ValueError):
    """One CSV row could not be typed or validated."""

    def __init__(self, line: int, column: str, reason: str):
        self.line = line
        self.column = column
        self.reason = reason
        super().__init__(f"line {line}: {column}: {reason}")


class DuplicateKey(PitchformError, ValueError):
    """Two pitches share (game_pk, ab_number, pitch_number)."""

    def __init__(self, key: Tuple[int, int, int]):
        self.key = key
        super().__init__(f"duplicate pitch key {key}")


class GapInSequence(PitchformError, ValueError):
    """An at-bat's pitch numbers are not 1..n."""

    def __init__(self, game_pk: int, ab_number: int, missing):
        self.game_pk = game_pk
        self.ab_number = ab_number
        self.missing = list(missing)
        super().__init__(f"game {game_pk} at-bat {ab_number}: missing pitch number(s) {self.missing}")


class IllegalTransition(PitchformError, ValueError):
    """A recorded pitch whose state cannot be reached or left legally."""

    def __init__(self, key: Tuple[int, int, int], reason: str):
        self.key = key
        self.reason = reason
        super().__init__(f"pitch {key}: {reason}")


# -------------------------------------------------------------------
# Stats
# -------------------------------------------------------------------

class UnknownPlayer(PitchformError, KeyError):
    """A player id with no appearances in the corpus."""

    def __init__(self, player_id, role: Optional[str] = None):
        self.player_id = player_id
        self.role = role
        where = f" as {role}" if role else ""
        super().__init__(f"unknown player {player_id}{where}")

    def __str__(self):
        return self.args[0]


class RankDeficient(PitchformError, ValueError):
    """Fewer samples or features than requested PCA components."""


# -------------------------------------------------------------------
# Dataset
# -------------------------------------------------------------------

class InsufficientHistory(PitchformError, ValueError):
    """A player has fewer at-bats than one window needs."""


class SequenceOverflow(PitchformError, ValueError):
    """A view has more pitches than the configured max sequence length."""


# -------------------------------------------------------------------
# Model and training
# -------------------------------------------------------------------

class IdOutOfRange(PitchformError, IndexError):
    """An input id falls outside its embedding table."""


class NoMaskedPositions(PitchformError, ValueError):
    """The masked-gamestate loss was asked for with nothing masked."""


class BadPairing(PitchformError, ValueError):
    """The view pairing is not a fixed-point-free involution."""


class NonFiniteGradient(PitchformError, FloatingPointError):
    """A NaN or infinity reached the gradients."""


class ShapeMismatch(PitchformError, ValueError):
    """A gradient does not have its parameter's shape."""


class CheckpointMismatch(PitchformError, ValueError):
    """A checkpoint was written for a different model configuration."""


# -------------------------------------------------------------------
# Analytics
# -------------------------------------------------------------------

class EmptyInput(PitchformError, ValueError):
    """Clustering was asked for on no points."""


class KeyMismatch(PitchformError, ValueError):
    """Two cluster assignments cover different (player, game) keys."""


# -------------------------------------------------------------------
# Pipeline
# -------------------------------------------------------------------

class StaleManifest(PitchformError):
    """A prior stage's outputs changed after its manifest was written."""


class MissingStage(PitchformError):
    """A stage's required prior stage has not been run."""

    def __init__(self, stage: str, command: str):
        self.stage = stage
        self.command = command
        super().__init__(f"stage '{stage}' has no outputs yet; run `{command}` first")
