import json
import struct
import threading

import numpy as np
import pytest

from geombench.embeddings import (
    EMB1_MAGIC,
    EmbeddingFormatError,
    EmbeddingTable,
    ProviderEndpoint,
    ProviderError,
    fetch_embeddings,
    pixel_table,
    pixel_vector,
    read_table,
    write_table,
)
from geombench.render import Image


def random_table(rng, count=10, dim=7, tag="toy"):
    entries = {
        f"stim-{i:03d}": rng.standard_normal(dim).astype(np.float32)
        for i in range(count)
    }
    return EmbeddingTable(model_tag=tag, dim=dim, entries=entries)


class TestTable:
    def test_validates_dim(self):
        with pytest.raises(ValueError):
            EmbeddingTable("m", 3, {"a": np.zeros(4, dtype=np.float32)})

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            EmbeddingTable("m", 2, {"a": np.array([1.0, np.nan], dtype=np.float32)})

    def test_matrix_order(self):
        rng = np.random.default_rng(0)
        t = random_table(rng, count=4, dim=3)
        m = t.matrix(["stim-002", "stim-000"])
        np.testing.assert_array_equal(m[0], t.entries["stim-002"])

    def test_matrix_missing_id(self):
        t = random_table(np.random.default_rng(0))
        with pytest.raises(KeyError):
            t.matrix(["nope"])


class TestFormats:
    def test_empty_table_emb1(self, tmp_path):
        path = tmp_path / "e.emb1"
        write_table(EmbeddingTable("m", 0, {}), "emb1", path)
        out = read_table(path)
        assert len(out) == 0
        # header only: magic + count + dim
        assert path.stat().st_size == 12

    def test_emb1_size_arithmetic(self, tmp_path):
        rng = np.random.default_rng(1)
        entries = {f"ab{i}": rng.standard_normal(4).astype(np.float32) for i in range(3)}
        t = EmbeddingTable("m", 4, entries)
        path = tmp_path / "t.emb1"
        write_table(t, "emb1", path)
        id_bytes = sum(2 + len(k.encode()) for k in entries)
        assert path.stat().st_size == 4 + 4 + 4 + 3 * 4 * 4 + id_bytes

    def test_emb1_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(2)
        for trial in range(5):
            t = random_table(rng, count=17, dim=13)
            path = tmp_path / f"r{trial}.emb1"
            write_table(t, "emb1", path)
            out = read_table(path, model_tag=t.model_tag)
            assert out.ids() == t.ids()
            assert out.dim == t.dim
            assert out.model_tag == t.model_tag
            for k in t.entries:
                assert out.entries[k].tobytes() == t.entries[k].tobytes()

    def test_jsonl_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        t = random_table(rng, count=5, dim=6, tag="dinov2")
        path = tmp_path / "t.jsonl"
        write_table(t, "jsonl", path)
        out = read_table(path)
        assert out.model_tag == "dinov2"
        for k in t.entries:
            # shortest round-trip decimal preserves float32 exactly
            assert out.entries[k].tobytes() == t.entries[k].tobytes()

    def test_jsonl_line_shape(self, tmp_path):
        t = EmbeddingTable("m", 2, {"a": np.array([1.5, -2.0], dtype=np.float32)})
        path = tmp_path / "t.jsonl"
        write_table(t, "jsonl", path)
        rec = json.loads(path.read_text().strip())
        assert set(rec) == {"id", "model", "dim", "v"}

    def test_truncated_emb1_rejected(self, tmp_path):
        rng = np.random.default_rng(4)
        t = random_table(rng, count=3, dim=5)
        path = tmp_path / "t.emb1"
        write_table(t, "emb1", path)
        data = path.read_bytes()
        for cut in (6, 20, len(data) - 3):
            bad = tmp_path / f"bad{cut}.emb1"
            bad.write_bytes(data[:cut])
            with pytest.raises(EmbeddingFormatError):
                read_table(bad)

    def test_duplicate_ids_rejected(self, tmp_path):
        vec = np.zeros(2, dtype=np.float32)
        path = tmp_path / "dup.emb1"
        with open(path, "wb") as fh:
            fh.write(EMB1_MAGIC)
            fh.write(struct.pack("<II", 2, 2))
            fh.write(vec.tobytes() * 2)
            for _ in range(2):
                fh.write(struct.pack("<H", 1) + b"a")
        with pytest.raises(EmbeddingFormatError, match="duplicate"):
            read_table(path)

    def test_nan_payload_rejected(self, tmp_path):
        path = tmp_path / "nan.emb1"
        with open(path, "wb") as fh:
            fh.write(EMB1_MAGIC)
            fh.write(struct.pack("<II", 1, 2))
            fh.write(np.array([1.0, np.nan], dtype="<f4").tobytes())
            fh.write(struct.pack("<H", 1) + b"a")
        with pytest.raises(EmbeddingFormatError, match="non-finite"):
            read_table(path)

    def test_unknown_format_arg(self, tmp_path):
        with pytest.raises(ValueError):
            write_table(EmbeddingTable("m", 0, {}), "csv", tmp_path / "x")


class _StubProvider:
    """Minimal in-process HTTP provider for protocol tests."""

    def __init__(self, dim=4, max_batch=4):
        from http.server import BaseHTTPRequestHandler, HTTPServer

        stub = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_GET(self):
                body = json.dumps(
                    {"models": [{"name": "toy", "dim": stub.dim}]}
                ).encode()
                self.send_response(200)
                self.end_headers()
                self.wfile.write(body)

            def do_POST(self):
                n = int(self.headers["Content-Length"])
                req = json.loads(self.rfile.read(n))
                stub.batches.append(len(req["images"]))
                if req["model"] != "toy":
                    self.send_response(404)
                    self.end_headers()
                    return
                if len(req["images"]) > stub.max_batch:
                    self.send_response(413)
                    self.end_headers()
                    return
                import base64 as b64

                vecs = []
                for img in req["images"]:
                    raw = b64.b64decode(img)
                    if not raw.startswith(b"\x89PNG"):
                        self.send_response(400)
                        self.end_headers()
                        return
                    seed = sum(raw) % 1000
                    vecs.append([float(seed + j) for j in range(stub.dim)])
                body = json.dumps(
                    {"model": "toy", "dim": stub.dim, "embeddings": vecs}
                ).encode()
                self.send_response(200)
                self.end_headers()
                self.wfile.write(body)

        self.dim = dim
        self.max_batch = max_batch
        self.batches = []
        self.server = HTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self):
        return f"http://127.0.0.1:{self.server.server_port}"

    def close(self):
        self.server.shutdown()


@pytest.fixture()
def provider():
    stub = _StubProvider()
    yield stub
    stub.close()


def _png(n):
    from geombench.render import encode_png

    data = np.full((32, 32), n % 255, dtype=np.uint8)
    return encode_png(Image(32, 32, data))


class TestFetch:
    def test_empty_list_no_request(self, provider):
        ep = ProviderEndpoint(provider.url)
        table = fetch_embeddings(ep, "toy", [])
        assert len(table) == 0
        assert provider.batches == []

    def test_batching_preserves_order(self, provider):
        ep = ProviderEndpoint(provider.url, max_batch=4)
        images = [(f"s{i}", _png(i)) for i in range(10)]
        table = fetch_embeddings(ep, "toy", images)
        assert provider.batches == [4, 4, 2]
        assert table.ids() == [f"s{i}" for i in range(10)]
        # stub vectors are a deterministic function of the bytes
        again = fetch_embeddings(ep, "toy", images)
        for k in table.entries:
            assert np.array_equal(table.entries[k], again.entries[k])

    def test_unknown_model_carries_ids(self, provider):
        ep = ProviderEndpoint(provider.url, max_batch=2)
        with pytest.raises(ProviderError) as err:
            fetch_embeddings(ep, "nope", [("a", _png(1)), ("b", _png(2))])
        assert err.value.ids == ("a", "b")

    def test_bad_image_rejected(self, provider):
        ep = ProviderEndpoint(provider.url)
        with pytest.raises(ProviderError):
            fetch_embeddings(ep, "toy", [("a", b"not a png")])

    def test_batch_limit_validation(self):
        with pytest.raises(ValueError):
            ProviderEndpoint("http://x", max_batch=0)


class TestPixel:
    def test_pixel_vector_shape(self):
        img = Image(224, 224, np.full((224, 224), 255, dtype=np.uint8))
        v = pixel_vector(img, side=32)
        assert v.shape == (1024,)
        assert np.allclose(v, 1.0)

    def test_pixel_table(self):
        imgs = {
            "a": Image(64, 64, np.zeros((64, 64), dtype=np.uint8)),
            "b": Image(64, 64, np.full((64, 64), 255, dtype=np.uint8)),
        }
        t = pixel_table(imgs, side=8)
        assert t.dim == 64
        assert np.allclose(t.entries["a"], 0.0)
        assert np.allclose(t.entries["b"], 1.0)

    def test_indivisible_rejected(self):
        img = Image(50, 50, np.zeros((50, 50), dtype=np.uint8))
        with pytest.raises(ValueError):
            pixel_vector(img, side=32)
