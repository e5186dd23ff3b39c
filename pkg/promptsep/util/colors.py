import sys
from enum import Enum


class Color(Enum):
    """ANSI color codes for terminal output"""

    RED = "\033[31m"
    GREEN = "\033[32m"
    YELLOW = "\033[33m"
    CYAN = "\033[36m"
    BOLD = "\033[1m"
    DIM = "\033[2m"

    END = "\033[0m"


def use_color(stream=None) -> bool:
    stream = stream or sys.stdout
    return hasattr(stream, "isatty") and stream.isatty()


def paint(text: str, color: Color, enabled: bool = True) -> str:
    if not enabled:
        return text
    return color.value + text + Color.END.value


def score_color(value_db: float) -> Color:
    """Green for a usable separation, yellow for marginal, red for failure"""
    if value_db >= 10.0:
        return Color.GREEN
    if value_db >= 0.0:
        return Color.YELLOW
    return Color.RED
