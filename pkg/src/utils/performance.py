import time
import logging
from collections import deque
from typing import Dict
from datetime import datetime

import numpy as np
import psutil

logger = logging.getLogger(__name__)


class RunMonitor:
    """Per-tick wall latency and resident memory for one run."""

    def __init__(self, window_size: int = 10000):
        self.window_size = window_size

        # Latency tracking
        self.tick_latencies = deque(maxlen=window_size)

        # Memory tracking
        self.memory_usage = deque(maxlen=window_size)

        self.start_time = datetime.now()
        self._started = time.perf_counter()
        self._process = None
        try:
            self._process = psutil.Process()
        except Exception as e:
            logger.error(f"Error attaching to process for memory sampling: {str(e)}")

    def record_tick(self, latency_seconds: float):
        """Record one tick's wall time and sample memory"""
        self.tick_latencies.append(latency_seconds * 1000.0)
        self.record_memory()

    def record_memory(self):
        if self._process is None:
            return
        try:
            self.memory_usage.append(self._process.memory_info().rss / (1024 * 1024))
        except Exception as e:
            logger.error(f"Error sampling memory usage: {str(e)}")

    def get_latency_percentiles(self) -> Dict[str, float]:
        """Calculate tick latency percentiles"""
        try:
            if self.tick_latencies:
                return {
                    'p50_tick_ms': float(np.percentile(self.tick_latencies, 50)),
                    'p90_tick_ms': float(np.percentile(self.tick_latencies, 90)),
                    'p99_tick_ms': float(np.percentile(self.tick_latencies, 99))
                }
        except Exception as e:
            logger.error(f"Error calculating latency percentiles: {str(e)}")
        return {
            'p50_tick_ms': 0.0,
            'p90_tick_ms': 0.0,
            'p99_tick_ms': 0.0
        }

    def get_metrics(self) -> Dict[str, float]:
        """Summary for the run manifest"""
        try:
            metrics = {
                'ticks': len(self.tick_latencies),
                'mean_tick_ms': float(np.mean(self.tick_latencies)) if self.tick_latencies else 0.0,
                'peak_memory_mb': float(np.max(self.memory_usage)) if self.memory_usage else 0.0,
                'wall_clock_seconds': time.perf_counter() - self._started,
            }
            metrics.update(self.get_latency_percentiles())
            return metrics
        except Exception as e:
            logger.error(f"Error calculating performance metrics: {str(e)}")
            return {
                'ticks': 0,
                'mean_tick_ms': 0.0,
                'peak_memory_mb': 0.0,
                'wall_clock_seconds': 0.0
            }

    def reset(self):
        """Reset all metrics"""
        self.tick_latencies.clear()
        self.memory_usage.clear()
        self.start_time = datetime.now()
        self._started = time.perf_counter()
        logger.info("Run metrics reset")
