import json

import numpy as np
import pytest


def write_json(path, obj):
    path.write_text(json.dumps(obj, ensure_ascii=False), encoding="utf-8")
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def task_a_records():
    return [
        {"id": "1", "text": "they lie about everything", "labels": ["Smears", "Loaded Language"]},
        {"id": "2", "text": "make it great", "labels": ["Slogans"]},
        {"id": "3", "text": "what a clown", "labels": ["Name calling/Labeling", "Smears"]},
        {"id": "4", "text": "nothing to see", "labels": []},
    ]


@pytest.fixture
def task_b_records():
    return [
        {"id": "1", "text": "they lie about everything",
         "labels": [{"technique": "Smears", "start": 0, "end": 8},
                    {"technique": "Loaded Language", "start": 5, "end": 25}]},
        {"id": "2", "text": "make it great", "labels": [{"technique": "Slogans", "start": 0, "end": 13}]},
        {"id": "3", "text": "nothing to see", "labels": []},
    ]
