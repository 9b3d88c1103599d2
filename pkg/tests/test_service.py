import json
import threading
import time
import urllib.error
import urllib.request

import pytest

from hilbo.service import make_server

# small solver budgets keep proposals fast; the service semantics are
# identical at any setting
FAST_SOLVER = {
    "fit": {"restarts": 2, "iterations": 80},
    "acquisition": {"starts": 6},
    "nsga2": {"population": 16, "generations": 10, "offspring_per_gen": 6,
              "mutations_per_gen": 4},
}


def demo_payload(**overrides):
    payload = {
        "mode": "demo",
        "function": {"kind": "gp", "dimension": 1, "seed": 3},
        "budget": 8,
        "p": 4,
        "seed": 17,
        **FAST_SOLVER,
    }
    payload.update(overrides)
    return payload


class Client:
    def __init__(self, port):
        self.base = f"http://127.0.0.1:{port}"

    def request(self, method, path, body=None):
        data = None if body is None else json.dumps(body).encode()
        req = urllib.request.Request(self.base + path, data=data, method=method)
        if data is not None:
            req.add_header("Content-Type", "application/json")
        try:
            with urllib.request.urlopen(req, timeout=30) as resp:
                return resp.status, json.loads(resp.read().decode())
        except urllib.error.HTTPError as err:
            return err.code, json.loads(err.read().decode())

    def get(self, path):
        return self.request("GET", path)

    def post(self, path, body):
        return self.request("POST", path, body)

    def wait_status(self, sid, *wanted, timeout=60.0):
        deadline = time.time() + timeout
        while time.time() < deadline:
            status, doc = self.get(f"/sessions/{sid}")
            assert status == 200
            if doc["status"] in wanted:
                return doc
            time.sleep(0.05)
        raise TimeoutError(f"session {sid} never reached {wanted}")


@pytest.fixture
def service(tmp_path):
    server, manager = make_server(str(tmp_path / "sessions"), port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield Client(server.server_address[1]), manager, str(tmp_path / "sessions")
    server.shutdown()
    server.server_close()


def test_demo_session_reaches_selection_with_p_choices(service):
    client, _, _ = service
    status, doc = client.post("/sessions", demo_payload())
    assert status == 201
    sid = doc["id"]
    doc = client.wait_status(sid, "awaiting_selection")
    assert doc["evaluations"] == 4
    status, choices = client.get(f"/sessions/{sid}/choices")
    assert status == 200
    assert len(choices["choices"]) == 4
    optima = [c for c in choices["choices"] if c["source"] == "utility_optimum"]
    assert len(optima) == 1
    # 1-d session ships a posterior curve for the decision-support panel
    assert len(choices["posterior"]) == 201


def test_demo_selection_advances_iteration(service):
    client, _, _ = service
    _, doc = client.post("/sessions", demo_payload())
    sid = doc["id"]
    client.wait_status(sid, "awaiting_selection")
    status, ack = client.post(f"/sessions/{sid}/selection", {"index": 1})
    assert status == 200
    assert ack["evaluations"] == 5
    doc = client.wait_status(sid, "awaiting_selection")
    assert doc["evaluations"] == 5
    status, choices = client.get(f"/sessions/{sid}/choices")
    assert choices["iteration"] == 1


def test_demo_session_finishes_at_budget(service):
    client, _, _ = service
    _, doc = client.post("/sessions", demo_payload(budget=6))
    sid = doc["id"]
    for _ in range(2):
        client.wait_status(sid, "awaiting_selection")
        client.post(f"/sessions/{sid}/selection", {"index": 0})
    doc = client.wait_status(sid, "finished")
    assert doc["summary"]["evaluations"] == 6
    assert "simple_regret" not in doc["summary"]  # sampled fn: no known optimum
    status, _ = client.get(f"/sessions/{sid}/choices")
    assert status == 409


def test_demo_with_standard_function_reports_regret(service):
    client, _, _ = service
    payload = demo_payload(
        budget=5,
        function={"kind": "standard", "name": "ackley", "dimension": 1},
    )
    _, doc = client.post("/sessions", payload)
    sid = doc["id"]
    client.wait_status(sid, "awaiting_selection")
    client.post(f"/sessions/{sid}/selection", {"index": 0})
    doc = client.wait_status(sid, "finished")
    assert len(doc["summary"]["simple_regret"]) == 5


def test_external_mode_lists_required_observations(service):
    client, _, _ = service
    payload = {
        "mode": "external",
        "bounds": {"lower": [0.0], "upper": [10.0]},
        "budget": 6,
        "seed": 9,
        **FAST_SOLVER,
    }
    status, doc = client.post("/sessions", payload)
    assert status == 201
    assert doc["status"] == "awaiting_observation"
    assert len(doc["required_observations"]) == 4
    sid = doc["id"]

    # feed the four initial observations
    for i in range(4):
        status, ack = client.post(f"/sessions/{sid}/observation", {"y": float(i)})
        assert status == 200
    doc = client.wait_status(sid, "awaiting_selection")

    status, choices = client.get(f"/sessions/{sid}/choices")
    assert status == 200
    status, ack = client.post(f"/sessions/{sid}/selection", {"index": 2})
    assert status == 200
    assert ack["status"] == "awaiting_observation"
    assert ack["point"] == choices["choices"][2]["point"]

    # resubmission after acceptance conflicts; the chosen point is immutable
    status, err = client.post(f"/sessions/{sid}/selection", {"index": 1})
    assert status == 409

    status, _ = client.post(f"/sessions/{sid}/observation", {"y": 2.5})
    assert status == 200
    client.wait_status(sid, "awaiting_selection")
    status, hist = client.get(f"/sessions/{sid}/history")
    assert len(hist["evaluations"]) == 5
    assert hist["selections"][0]["selected_index"] == 2


def test_validation_errors(service):
    client, _, _ = service
    status, err = client.post("/sessions", {"mode": "bogus"})
    assert status == 400 and err["code"] == "validation"
    status, err = client.post("/sessions", {"mode": "external",
                                            "bounds": {"lower": [1.0], "upper": [1.0]}})
    assert status == 400
    status, err = client.post("/sessions", {"mode": "demo"})
    assert status == 400  # demo needs a function
    status, err = client.get("/sessions/nope")
    assert status == 404 and err["code"] == "not_found"


def test_rejects_bad_observations_and_indices(service):
    client, _, _ = service
    _, doc = client.post("/sessions", demo_payload())
    sid = doc["id"]
    client.wait_status(sid, "awaiting_selection")
    status, err = client.post(f"/sessions/{sid}/selection", {"index": 11})
    assert status == 400
    status, err = client.post(f"/sessions/{sid}/selection", {})
    assert status == 400
    status, err = client.post(f"/sessions/{sid}/observation", {"y": 1.0})
    assert status == 409  # demo session is awaiting a selection, not an observation

    payload = {"mode": "external", "bounds": {"lower": [0.0], "upper": [1.0]},
               "budget": 6, **FAST_SOLVER}
    _, doc = client.post("/sessions", payload)
    sid = doc["id"]
    status, err = client.post(f"/sessions/{sid}/observation", {"y": float("nan")})
    assert status == 400
    status, err = client.post(f"/sessions/{sid}/observation", {"y": "much"})
    assert status == 400


def test_posterior_endpoint_grid(service):
    client, _, _ = service
    _, doc = client.post("/sessions", demo_payload())
    sid = doc["id"]
    client.wait_status(sid, "awaiting_selection")
    status, doc = client.get(f"/sessions/{sid}/posterior?grid=51")
    assert status == 200
    assert len(doc["grid"]) == 51
    row = doc["grid"][0]
    assert set(row) == {"x", "mean", "std", "utility"}
    assert abs(row["utility"] - (row["mean"] + 2.0 * row["std"])) < 1e-9


def test_concurrent_duplicate_selections_single_winner(service):
    client, _, _ = service
    _, doc = client.post("/sessions", demo_payload())
    sid = doc["id"]
    client.wait_status(sid, "awaiting_selection")
    outcomes = []

    def submit():
        outcomes.append(client.post(f"/sessions/{sid}/selection", {"index": 0})[0])

    threads = [threading.Thread(target=submit) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(outcomes).count(200) == 1
    assert sorted(outcomes)[1:] == [409, 409, 409]


def test_restart_resumes_identical_pending_choices(service, tmp_path):
    client, manager, data_dir = service
    _, doc = client.post("/sessions", demo_payload())
    sid = doc["id"]
    client.wait_status(sid, "awaiting_selection")
    _, before = client.get(f"/sessions/{sid}/choices")

    # simulate a restart: a fresh manager over the same data directory
    server2, manager2 = make_server(data_dir, port=0)
    thread = threading.Thread(target=server2.serve_forever, daemon=True)
    thread.start()
    try:
        client2 = Client(server2.server_address[1])
        doc2 = client2.wait_status(sid, "awaiting_selection")
        _, after = client2.get(f"/sessions/{sid}/choices")
        assert after["choices"] == before["choices"]
        assert after["iteration"] == before["iteration"]
        # and the resumed session keeps working
        status, ack = client2.post(f"/sessions/{sid}/selection", {"index": 0})
        assert status == 200
    finally:
        server2.shutdown()
        server2.server_close()


def test_free_point_override_selection(service):
    client, _, _ = service
    _, doc = client.post("/sessions", demo_payload())
    sid = doc["id"]
    client.wait_status(sid, "awaiting_selection")
    status, ack = client.post(f"/sessions/{sid}/selection", {"point": [9.25]})
    assert status == 200
    assert ack["point"] == [9.25]
    doc = client.wait_status(sid, "awaiting_selection")
    _, hist = client.get(f"/sessions/{sid}/history")
    assert any(abs(r["point"][0] - 9.25) < 1e-12 for r in hist["evaluations"])
