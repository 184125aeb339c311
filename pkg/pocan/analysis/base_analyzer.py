from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from pocan.model import Config, Dra, Poc
from pocan.utils import PhaseTimer


@dataclass
class AnalysisContext:
    """Everything a command needs: the parsed inputs, the merged settings and the CLI overrides."""

    model: Poc
    model_path: Path
    settings: Dict[str, Any]
    overrides: Dict[str, Any] = field(default_factory=dict)
    start: Optional[Config] = None
    target: Optional[str] = None
    pairs: Optional[List[Tuple[str, str]]] = None
    dra: Optional[Dra] = None
    timer: PhaseTimer = field(default_factory=PhaseTimer)

    def option(self, name: str) -> Any:
        """A CLI value when one was given, otherwise the configured default."""
        value = self.overrides.get(name)
        return self.settings[name] if value is None else value

    def setting(self, section: str, key: str) -> Any:
        return self.settings[section][key]


class BaseAnalyzer(ABC):
    """Abstract base class for analysis strategies."""

    @abstractmethod
    def analyze(self, context: AnalysisContext) -> dict:
        """
        Runs one command on the model in `context`.

        Args:
            context: The parsed model, options and timer.

        Returns:
            A dictionary with `results` (machine-readable tree), `tables` (name -> DataFrame),
            and optionally `summary`, `precision` and `notes`.
        """
        pass
