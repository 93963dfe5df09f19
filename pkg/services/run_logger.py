#!/usr/bin/env python3
"""
Run Logger Service

Records solver runs to disk:
- per-iteration traces (TSV) fed by the fit progress callback
- system events (TSV)
- detailed JSON records for benchmark runs
"""

import csv
import json
import logging
from dataclasses import asdict, dataclass
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional, TextIO

logger = logging.getLogger(__name__)

TRACE_HEADER = ['k', 'objective', 'r_A', 'r_U', 'r_V']

@dataclass
class SystemEvent:
    """Data class for system events."""
    timestamp: str
    level: str  # INFO, WARNING, ERROR
    component: str
    event: str
    details: str = ""

class TraceWriter:
    """Progress callback that appends one TSV row per ADMM iteration."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._file: Optional[TextIO] = open(self.path, 'w', newline='')
        self._writer = csv.writer(self._file, delimiter='\t')
        self._writer.writerow(TRACE_HEADER)
        self.rows = 0

    def __call__(self, k: int, objective: float, r_a: float, r_u: float, r_v: float):
        if self._file is None:
            return
        self._writer.writerow([k, repr(objective), repr(r_a), repr(r_u), repr(r_v)])
        self.rows += 1

    def close(self):
        if self._file is not None:
            self._file.close()
            self._file = None
            logger.info(f"Trace written: {self.path} ({self.rows} iterations)")

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

class RunLogger:
    """
    Run logging service.

    Manages:
    - system events
    - detailed benchmark run records
    """

    def __init__(self, log_directory: str = "data/logs", save_detailed_runs: bool = True):
        """
        Initialize the run logger.

        Args:
            log_directory: Directory to store log files
            save_detailed_runs: Write a JSON record per benchmark run
        """
        self.log_directory = Path(log_directory)
        self.save_detailed_runs = save_detailed_runs
        self.current_run_id = None
        self.current_run_data = {}

        self.log_directory.mkdir(parents=True, exist_ok=True)
        self.system_events_file = self.log_directory / "system_events.tsv"
        self._initialize_files()

        logger.debug(f"RunLogger initialized with log directory: {self.log_directory}")

    def _initialize_files(self):
        if not self.system_events_file.exists():
            with open(self.system_events_file, 'w', newline='') as f:
                csv.writer(f, delimiter='\t').writerow(
                    ['timestamp', 'level', 'component', 'event', 'details'])

    def start_run(self, config: Dict[str, Any]) -> str:
        """
        Start a new run session.

        Args:
            config: Run configuration

        Returns:
            str: Unique run ID
        """
        timestamp = datetime.now()
        self.current_run_id = f"RUN_{timestamp.strftime('%Y%m%d_%H%M%S')}_{timestamp.microsecond // 1000:03d}"
        self.current_run_data = {
            'run_id': self.current_run_id,
            'start_time': timestamp,
            'config': config,
            'trials': [],
            'events': []
        }
        self.log_system_event('INFO', 'RunLogger', f'Run started: {self.current_run_id}')
        return self.current_run_id

    def log_trial(self, record: Dict[str, Any]):
        """Attach one trial result to the active run."""
        if not self.current_run_id:
            logger.warning("No active run for trial record")
            return
        self.current_run_data['trials'].append(record)

    def log_system_event(self, level: str, component: str, event: str, details: str = ""):
        """
        Log a system event.

        Args:
            level: Event level (INFO, WARNING, ERROR)
            component: Component that generated the event
            event: Event description
            details: Additional event details
        """
        system_event = SystemEvent(
            timestamp=datetime.now().isoformat(),
            level=level,
            component=component,
            event=event,
            details=details
        )
        if self.current_run_id:
            self.current_run_data['events'].append(asdict(system_event))

        try:
            with open(self.system_events_file, 'a', newline='') as f:
                csv.writer(f, delimiter='\t').writerow([
                    system_event.timestamp, system_event.level, system_event.component,
                    system_event.event, system_event.details
                ])
        except Exception as e:
            logger.error(f"Failed to write system event: {e}")

    def finish_run(self, summary: Dict[str, Any]) -> Optional[Path]:
        """Close the active run and write its detailed record."""
        if not self.current_run_id:
            logger.warning("No active run to finish")
            return None

        self.current_run_data['end_time'] = datetime.now()
        self.current_run_data['summary'] = summary
        self.log_system_event('INFO', 'RunLogger', f'Run finished: {self.current_run_id}')

        json_file = None
        if self.save_detailed_runs:
            json_file = self._save_detailed_run()

        self.current_run_id = None
        self.current_run_data = {}
        return json_file

    def _save_detailed_run(self) -> Optional[Path]:
        """Save detailed run data as JSON file."""
        try:
            detailed_dir = self.log_directory / "detailed_runs"
            detailed_dir.mkdir(exist_ok=True)

            json_file = detailed_dir / f"{self.current_run_id}_detailed.json"
            with open(json_file, 'w') as f:
                json.dump(self.current_run_data, f, indent=2, default=str)

            logger.info(f"Detailed run data saved: {json_file}")
            return json_file

        except Exception as e:
            logger.error(f"Failed to save detailed run data: {e}")
            return None

    def close(self):
        """Clean up run logger resources."""
        if self.current_run_id:
            self.log_system_event('WARNING', 'RunLogger',
                                  f'Run {self.current_run_id} terminated during logging cleanup')
