import gzip
import os
from dataclasses import dataclass

from natsort import os_sorted

from bidwright.core import logger
from bidwright.core.exceptions import InvalidParams, MalformedLine
from bidwright.dataset.events import parse_log_line

LOG_SUFFIXES = ('.txt', '.log', '.tsv', '.gz')


@dataclass
class LoadStats:
    files: int = 0
    lines: int = 0
    events: int = 0
    skipped: int = 0


def open_log(path):
    """
    Open a log file for text reading, decompressing transparently when it is gzip.

    :param str path: Path to a plain or gzip-compressed log.
    """
    with open(path, 'rb') as f:
        magic = f.read(2)
    if magic == b'\x1f\x8b':
        return gzip.open(path, 'rt', encoding='utf-8', errors='replace')
    return open(path, 'r', encoding='utf-8', errors='replace')


def find_log_files(path):
    """
    Expand a directory into its log files in natural order (``day2`` before ``day10``).

    :param str path: A file or a directory.
    :rtype: list[str]
    """
    if os.path.isfile(path):
        return [path]
    if not os.path.isdir(path):
        raise InvalidParams(f"log path does not exist: {path}")
    names = [n for n in os.listdir(path) if n.lower().endswith(LOG_SUFFIXES)]
    return [os.path.join(path, n) for n in os_sorted(names)]


def load_campaign_logs(paths, schema, campaign_id='', on_error='skip'):
    """
    Parse every line of the given log files into events.

    When the schema has no ``timestamp`` role, each file is treated as one calendar day, in the
    natural sort order of the file names.

    :param list[str] paths: Files or directories.
    :param ColumnSchema schema: Column layout.
    :param str campaign_id: Campaign id stamped onto every event.
    :param str on_error: ``skip`` to count and skip malformed lines, ``abort`` to raise.
    :return: The events in log order and load statistics.
    :rtype: tuple[list[ImpressionEvent], LoadStats]
    """
    if on_error not in ('skip', 'abort'):
        raise InvalidParams(f"on_error must be 'skip' or 'abort', got {on_error!r}")

    files = []
    for path in ([paths] if isinstance(paths, str) else paths):
        files.extend(find_log_files(path))

    stats = LoadStats()
    events = []
    per_file_days = 'timestamp' not in schema.roles
    for file_index, file_path in enumerate(files):
        stats.files += 1
        logger.info(f"[LogLoader] Reading {file_path}")
        with open_log(file_path) as f:
            for line_number, line in enumerate(f, start=1):
                if line_number == 1 and schema.has_header:
                    continue
                if not line.strip():
                    continue
                stats.lines += 1
                try:
                    event = parse_log_line(line, schema, campaign_id=campaign_id, line_number=line_number,
                                           day_index=file_index if per_file_days else 0)
                except MalformedLine as e:
                    if on_error == 'abort':
                        logger.error(f"[LogLoader] Malformed line in {file_path}: {e}")
                        raise
                    stats.skipped += 1
                    continue
                events.append(event)
                stats.events += 1

    if stats.skipped:
        logger.warning(f"[LogLoader] Skipped {stats.skipped} malformed lines out of {stats.lines}")
    logger.info(f"[LogLoader] Loaded {stats.events} events for campaign '{campaign_id}' from {stats.files} files")
    return events, stats
