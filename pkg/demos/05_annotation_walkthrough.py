"""Walk two simulated subjects through the annotation service.

Spins the HTTP app up in-process (no sockets), shows the protocol rules in
action (the 5-second gate, duplicate rejection, seeded left/right
randomization) and ends by exporting the collected judgments and deriving
their (l, c, r) scores.
"""

import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from salbench import bench
from salbench.judgments import derive_scores, load_dataset
from salbench.service import MIN_VIEW_MS, create_app

root = Path(tempfile.mkdtemp(prefix="annotation_demo_"))
manifest = bench.generate_benchmark(root, seed=3, n_images=1, width=32, height=32, n_subjects=2)


class ManualClock:
    now = 1_000_000

    def __call__(self):
        return self.now


clock = ManualClock()
app = create_app(bench.load_manifest(manifest), root / "answers.log", seed=5, clock=clock)
client = TestClient(app)

for subject in ("ada", "grace"):
    token = client.post("/session", json={"subject_id": subject}).json()["token"]
    print(f"\n{subject}: session {token[:8]}...")
    for k in range(4):
        q = client.get("/question", params={"token": token}).json()
        print(f"  question {q['question_id']} ({q['image_id']}), media: {sorted(q['media'])}")
        early = client.post(
            "/answer", params={"token": token},
            json={"question_id": q["question_id"], "choice": "left"},
        )
        print(f"  answering immediately -> HTTP {early.status_code} (must view >= 5 s)")
        clock.now += MIN_VIEW_MS
        ok = client.post(
            "/answer", params={"token": token},
            json={"question_id": q["question_id"], "choice": "left"},
        )
        print(f"  after 5 s -> HTTP {ok.status_code}, progress {ok.json()['answered']}/{ok.json()['total']}")
        dup = client.post(
            "/answer", params={"token": token},
            json={"question_id": q["question_id"], "choice": "right"},
        )
        print(f"  answering again -> HTTP {dup.status_code} (duplicate)")

print("\nprogress:", client.get("/progress").json()["per_subject"])

export_path = root / "export.jsonl"
export_path.write_text(client.get("/export").text)
dataset = load_dataset(export_path)
print(f"\nexported {len(dataset)} judgment records; derived scores:")
for record in dataset.records:
    l, c, r = derive_scores(record)
    print(f"  q{record.question_id} {record.esm_a_id} vs {record.esm_b_id}: l={l:.2f} c={c:.2f} r={r:+.2f}")
