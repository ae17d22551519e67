import json
import os


class TranscriptWriter:
    """
    JSON-lines record of every agent decision and reflection, flushed per record. The agent opens it
    with a header naming the backend and model.

    Records carry no wall-clock time so stub runs produce identical files.
    """

    def __init__(self, path=None):
        self.path = path
        self.step_records = 0
        self.reflection_records = 0
        if path:
            os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
            open(path, 'w', encoding='utf-8').close()

    def _write(self, record):
        if self.path:
            with open(self.path, 'a', encoding='utf-8') as f:
                f.write(json.dumps(record, sort_keys=True, default=str) + '\n')

    def write_header(self, run):
        self._write({'record_type': 'header', **run})

    def write_step(self, day, step, lambda_base, lambda_t, trace):
        self._write({'record_type': 'step', 'day': day, 'step': step, 'lambda_base': lambda_base,
                     'lambda_t': lambda_t, **trace})
        self.step_records += 1

    def write_reflection(self, day, trace):
        self._write({'record_type': 'reflection', 'day': day, **trace})
        self.reflection_records += 1


def read_transcript(path):
    with open(path, 'r', encoding='utf-8') as f:
        return [json.loads(line) for line in f if line.strip()]
