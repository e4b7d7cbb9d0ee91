"""
Progress tracking for long-running experiments
"""

from dataclasses import dataclass
from typing import Optional


@dataclass
class SimulationProgress:
    """Track experiment progress"""
    current_rep: int = 0
    total_reps: int = 0
    failed_reps: int = 0
    label: Optional[str] = None
    message: str = ""

    @property
    def progress_percent(self) -> float:
        """Get progress as a fraction in [0, 1]"""
        if self.total_reps == 0:
            return 0.0
        return min(self.current_rep / self.total_reps, 1.0)

    def get_status_message(self) -> str:
        """Get formatted status message"""
        if self.current_rep:
            msg = f"{self.label or 'experiment'} | Rep {self.current_rep}/{self.total_reps}"
            if self.failed_reps:
                msg += f" | {self.failed_reps} failed"
            return msg
        return "Initializing experiment..."
