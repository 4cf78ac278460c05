import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from chiliforge import cif, codclient, elements
from chiliforge.cif import Site, UnitCell
from chiliforge.errors import MalformedRow, NotFound, TransportError

CIF_BODY = b"data_test\n_cell_length_a 4.0\n"


class ScriptedHandler(BaseHTTPRequestHandler):
    """Serves /<id>.cif according to a per-id script of status codes."""

    script = {}
    hits = []

    def do_GET(self):
        cod_id = self.path.rsplit("/", 1)[-1].removesuffix(".cif")
        type(self).hits.append(cod_id)
        plan = type(self).script.get(cod_id, [200])
        status = plan.pop(0) if len(plan) > 1 else plan[0]
        if status == 200:
            self.send_response(200)
            self.send_header("Content-Length", str(len(CIF_BODY)))
            self.end_headers()
            self.wfile.write(CIF_BODY)
        else:
            self.send_error(status)

    def log_message(self, *args):
        pass


@pytest.fixture
def server():
    httpd = HTTPServer(("127.0.0.1", 0), ScriptedHandler)
    ScriptedHandler.script = {}
    ScriptedHandler.hits = []
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{httpd.server_address[1]}"
    httpd.shutdown()


def make_job(tmp_path, endpoint):
    return codclient.FetchJob(cache_dir=tmp_path / "cache", endpoint=endpoint,
                              backoff_base=0.01, politeness_delay=0.0)


class TestIdList:
    def test_two_rows(self):
        assert codclient.load_id_list(b"1000001\n1000002\n") == [1000001, 1000002]

    def test_dedup_preserves_order(self):
        assert codclient.load_id_list(b"7\n3\n7\n1\n") == [7, 3, 1]

    def test_first_column_of_csv(self):
        assert codclient.load_id_list(b"42,stuff,more\n43,x\n") == [42, 43]

    def test_malformed_row(self):
        with pytest.raises(MalformedRow) as err:
            codclient.load_id_list(b"abc\n")
        assert err.value.row_number == 1


class TestFetch:
    def test_fetch_then_cache_hit(self, tmp_path, server):
        job = make_job(tmp_path, server)
        assert codclient.fetch(1, job) == CIF_BODY
        assert job.ledger[1] == "fetched"
        ScriptedHandler.hits = []
        assert codclient.fetch(1, job) == CIF_BODY
        assert ScriptedHandler.hits == []  # no network call
        assert job.ledger[1] == "cached"

    def test_404_is_permanent(self, tmp_path, server):
        ScriptedHandler.script = {"5": [404]}
        job = make_job(tmp_path, server)
        with pytest.raises(NotFound):
            codclient.fetch(5, job)
        assert ScriptedHandler.hits == ["5"]  # no retries
        assert job.ledger[5] == "http-error 404"

    def test_retry_after_two_503(self, tmp_path, server):
        ScriptedHandler.script = {"9": [503, 503, 200]}
        job = make_job(tmp_path, server)
        assert codclient.fetch(9, job) == CIF_BODY
        assert ScriptedHandler.hits == ["9", "9", "9"]
        assert job.ledger[9] == "fetched"

    def test_exhausted_retries(self, tmp_path, server):
        ScriptedHandler.script = {"13": [503]}
        job = make_job(tmp_path, server)
        job.max_attempts = 3
        with pytest.raises(TransportError):
            codclient.fetch(13, job)
        assert len(ScriptedHandler.hits) == 3
        assert job.ledger[13] == "transport-error"

    def test_fetch_all_ledger_covers_every_id(self, tmp_path, server):
        ScriptedHandler.script = {"2": [404]}
        job = make_job(tmp_path, server)
        ledger = codclient.fetch_all([1, 2, 3], job)
        assert sorted(ledger) == [1, 2, 3]
        assert ledger[1] == "fetched" and ledger[3] == "fetched"
        assert ledger[2] == "http-error 404"

    def test_completed_job_makes_no_network_calls(self, tmp_path, server):
        job = make_job(tmp_path, server)
        codclient.fetch_all([1, 2, 3], job)
        ScriptedHandler.hits = []
        ledger = codclient.fetch_all([1, 2, 3], job)
        assert ScriptedHandler.hits == []
        assert all(outcome == "cached" for outcome in ledger.values())

    def test_ledger_roundtrip(self, tmp_path):
        ledger = {1: "fetched", 2: "http-error 404"}
        path = tmp_path / "ledger.tsv"
        codclient.write_ledger(ledger, path)
        assert codclient.read_ledger(path) == ledger


class TestCurate:
    def make_cell(self, a, symbols):
        sites = tuple(Site(s, (0.1 * k, 0, 0)) for k, s in enumerate(symbols))
        return UnitCell(a, a, a, 90, 90, 90, 1, "P 1", sites)

    def test_accept_below_volume_bound(self):
        cell = self.make_cell(9.9996, ["Cu", "O"])  # volume 999.88
        assert cif.cell_volume(cell) < 1000.0
        accepted, reason = codclient.curate(cell, elements.policy("chili3k"))
        assert accepted and reason is None

    def test_reject_at_exact_bound(self):
        cell = self.make_cell(10.0, ["Cu", "O"])  # volume exactly 1000
        accepted, reason = codclient.curate(cell, elements.policy("chili3k"))
        assert not accepted and reason == codclient.REASON_VOLUME

    def test_reject_disallowed_element(self):
        cell = self.make_cell(4.0, ["Cu", "He"])
        accepted, reason = codclient.curate(cell, elements.policy("chili100k"))
        assert not accepted and reason == codclient.REASON_DISALLOWED

    def test_reject_no_metal(self):
        cell = self.make_cell(4.0, ["O"])
        accepted, reason = codclient.curate(cell, elements.policy("chili3k"))
        assert not accepted and reason == codclient.REASON_NO_METAL
