"""
The full chat-service flow, in process
======================================

Drives the HTTP API end to end with the echoing mock backend: create an
inferential session, upload a battery instance, ask two questions, fetch
the waterfall and the history. To run the same flow over a real socket:

    shapchat synth --n 500 --seed 7 --out data.csv
    shapchat train --data data.csv --seed 7 --out model.json
    echo '{"model_path": "model.json", "background_path": "data.csv"}' > service.json
    shapchat serve --config service.json --mock-backend --port 8000
"""

from fastapi.testclient import TestClient

from shapchat import BackendConfig, BackgroundSet, MockBackend, TrainParams
from shapchat import generate_synthetic_battery_table, train_gbdt
from shapchat.service import ServiceSettings, create_app

table = generate_synthetic_battery_table(300, noise_sigma=0.01, seed=21)
model = train_gbdt(table, TrainParams(n_trees=40, max_depth=3, learning_rate=0.2, seed=21))

settings = ServiceSettings(
    model=model,
    background=BackgroundSet.from_table(table, max_rows=40, seed=21),
    backend_config=BackendConfig(base_url="http://demo"),
    transport=MockBackend(mode="echo_top_feature"),
)
app = create_app(settings)

with TestClient(app) as client:
    session = client.post("/api/sessions", json={"mode": "inferential"}).json()
    print(f"session {session['session_id'][:8]}..., prompt version {session['prompt_version']}")

    # inferential sessions must upload before asking
    early = client.post(
        f"/api/sessions/{session['session_id']}/messages", json={"question": "why?"}
    )
    print(f"ask before upload -> HTTP {early.status_code} ({early.json()['error']})")

    row = ["NCA", 2400.0, 44.0, 92.0, 2.7, 2900.0, 35.0]
    upload = client.post(
        f"/api/sessions/{session['session_id']}/instance", json={"values": row}
    ).json()
    print(f"uploaded; prediction = {upload['prediction']:.4f}")

    for question in ("What drives this prediction?", "And what should I change?"):
        answer = client.post(
            f"/api/sessions/{session['session_id']}/messages", json={"question": question}
        ).json()["answer"]
        print(f"Q: {question}\nA: {answer}")

    waterfall = client.get(f"/api/sessions/{session['session_id']}/explanation").json()
    print(f"waterfall: {len(waterfall['contributions'])} bars, "
          f"final value {waterfall['final_value']:.4f}")
    history = client.get(f"/api/sessions/{session['session_id']}/history").json()["messages"]
    print(f"history: {[m['role'] for m in history]}")
