import json

import numpy as np
import pytest

import orts


def ellipse_mask(h, w):
    yy, xx = np.mgrid[0:h, 0:w]
    return ((xx + 0.5 - w / 2) / (w / 4)) ** 2 + ((yy + 0.5 - h / 2) / (h / 4)) ** 2 < 1.0


def test_catalog_and_weights():
    ids = orts.operation_ids()
    assert len(ids) == 38
    assert len(set(ids)) == 38
    mask = ellipse_mask(48, 64)
    pres = dict(orts.operation_weights("preserving", mask))
    rem = dict(orts.operation_weights("removing", mask))
    assert len(pres) == 25 and len(rem) == 13
    assert abs(sum(pres.values()) - 1.0) <= 1e-12
    assert abs(sum(rem.values()) - 1.0) <= 1e-12
    assert pres["PsvObj/gray"] == 1.0 / 3
    with pytest.raises(ValueError):
        orts.operation_weights("sideways", mask)


def test_mutate_round_trip():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, size=(40, 48, 3), dtype=np.uint8)
    mask = ellipse_mask(40, 48)
    out = orts.mutate(img, mask, "RmvObjByRGB/black")
    assert out.shape == img.shape and out.dtype == np.uint8
    assert (out[20, 24] == 0).all()
    # Far from the object nothing moves.
    assert (out[0:3, 0:3] == img[0:3, 0:3]).all()
    box = np.zeros((40, 48), dtype=bool)
    box[10:30, 10:30] = True
    assert orts.mutate(img, box, "RmvObjByMM/mean", has_mask=False) is None
    with pytest.raises(KeyError):
        orts.mutate(img, mask, "NoSuchOp/x")
    with pytest.raises(ValueError):
        orts.mutate(img[:, :, 0], mask, "PsvObj/gray")


def test_distances_and_iou():
    assert orts.rank_of([0.7, 0.2, 0.1], 1) == (0.2, 2)
    assert orts.dist_cls_preserving(0.8, 1, 0.4, 2) == pytest.approx(0.25, abs=1e-15)
    assert orts.dist_cls_removing(0.6, 1, 0.6, 1) == 0.0
    assert orts.dist_det_preserving(0.8, 0.6, True) == pytest.approx(0.75, abs=1e-15)
    assert orts.dist_det_removing(0.8, 0.0) == 1.0
    assert orts.box_iou((0, 0, 10, 10), (5, 0, 10, 10)) == pytest.approx(1 / 3)
    m = np.zeros((8, 8), dtype=bool)
    m[2:6, 2:6] = True
    assert orts.mask_iou(m, m) == 1.0


def test_imaging():
    rng = np.random.default_rng(1)
    img = rng.integers(0, 256, size=(20, 20, 3), dtype=np.uint8)
    band = np.zeros((20, 20), dtype=bool)
    band[5, 5] = True
    out = orts.median_filter(img, band, 3)
    expect = np.median(img[4:7, 4:7].reshape(-1, 3), axis=0)
    assert (out[5, 5] == expect).all()
    assert (np.delete(out.reshape(-1, 3), 5 * 20 + 5, axis=0) == np.delete(img.reshape(-1, 3), 5 * 20 + 5, axis=0)).all()
    flat = np.full((12, 12, 3), 90, dtype=np.uint8)
    hole = np.zeros((12, 12), dtype=bool)
    hole[5, 6] = True
    damaged = flat.copy()
    damaged[5, 6] = 0
    for method in ("telea", "diffusion"):
        assert (orts.inpaint(damaged, hole, method) == flat).all()


def test_wire_codec():
    body = orts.encode_classify_response("r1", [0.25, 0.75])
    assert json.loads(body) == {"probs": [0.25, 0.75], "request_id": "r1"}
    assert orts.decode_classify_response(body, "r1", 2) == [0.25, 0.75]
    with pytest.raises(orts.ProtocolError):
        orts.decode_classify_response(body, "r1", 3)
    with pytest.raises(orts.OrtsError):
        orts.decode_classify_response(body, "other", 2)

    mask = np.zeros((6, 8), dtype=bool)
    mask[1:3, 2:4] = True
    recs = [{"label": 1, "bbox": (2, 1, 2, 2), "confidence": 0.5, "mask": mask},
            {"label": 0, "bbox": (0, 0, 3, 3), "confidence": 0.9, "mask": None}]
    body = orts.encode_detect_response("d", recs)
    back = orts.decode_detect_response(body, "d", 2, 8, 6)
    assert back[0]["bbox"] == (2, 1, 2, 2)
    assert (back[0]["mask"] == mask).all()
    assert back[1]["mask"] is None
    bad = json.loads(body)
    bad["records"][0]["confidence"] = 1.5
    with pytest.raises(orts.ProtocolError):
        orts.decode_detect_response(json.dumps(bad), "d", 2, 8, 6)

    task, png, rid = orts.decode_request(json.dumps({"task": "classify", "image_b64": "iVBORw==", "request_id": "q"}))
    assert (task, png, rid) == ("classify", b"\x89PNG", "q")


def test_fixtures_and_report(tmp_path):
    assert orts.make_fixtures("detection", tmp_path / "det") == 8
    assert (tmp_path / "det" / "fixture.json").exists()
    with pytest.raises(ValueError):
        orts.make_fixtures("nope", tmp_path / "x")
    report = {"schema_version": 1, "task": "classify", "summary": {
        "images_total": 0, "images_selected": 0, "images_failed": 0,
        "records_without_associated_object": 0, "records_below_iou_threshold": 0,
        "flagged": 0, "aborted": False, "failures": []}, "reports": []}
    csv = orts.report_to_csv(json.dumps(report))
    assert csv.startswith("image_id,task,label")
    with pytest.raises(orts.OrtsError):
        orts.report_to_csv(json.dumps({"schema_version": 7}))
