"""Smoke test for the python bindings. Runs as a plain script: the build
stages the package under <build>/python and ctest points PYTHONPATH there."""

import json
import os
import tempfile

import poicast

START = 1333238400  # Sun Apr 01 00:00:00 +0000 2012

TIMES = {
    0: "Sun Apr 01 00:00:00 +0000 2012",
    5: "Sun Apr 01 05:00:00 +0000 2012",
    10: "Sun Apr 01 10:00:00 +0000 2012",
    15: "Sun Apr 01 15:00:00 +0000 2012",
    20: "Sun Apr 01 20:00:00 +0000 2012",
    25: "Mon Apr 02 01:00:00 +0000 2012",
    30: "Mon Apr 02 06:00:00 +0000 2012",
    35: "Mon Apr 02 11:00:00 +0000 2012",
}

POIS = {
    "p1": ("c1", "Food", 40.7000, -74.0000),
    "p2": ("c2", "Bar", 40.7050, -74.0050),
    "p3": ("c1", "Food", 40.7100, -73.9950),
    "p4": ("c2", "Bar", 40.6950, -74.0100),
    "p5": ("c2", "Bar", 40.7150, -74.0020),
}

VISITS = [
    ("ua", "p1", 0), ("ua", "p2", 10), ("ua", "p1", 20), ("ua", "p3", 30),
    ("ub", "p2", 5), ("ub", "p4", 15), ("ub", "p5", 25), ("ub", "p4", 35),
]


def checkins_tsv():
    lines = []
    for user, poi, hour in VISITS:
        cat_id, cat_name, lat, lon = POIS[poi]
        lines.append("\t".join([
            user, poi, cat_id, cat_name,
            "%.6f" % lat, "%.6f" % lon, "-240", TIMES[hour],
        ]))
    return "\n".join(lines) + "\n"


def main():
    assert poicast.hour_of_week(1333476009, -240) == 38
    assert poicast.hour_of_week(1333324800, 0) == 0  # Mon Apr 02 00:00 UTC

    dataset = poicast.parse_checkins(checkins_tsv())
    assert dataset.user_count == 2
    assert dataset.poi_count == 5
    assert dataset.category_count == 2
    assert dataset.total_visits == 8
    assert dataset.skipped_lines == 0

    zone, north = poicast.project(dataset)
    assert zone == 18 and north  # lon -74 lands in UTM zone 18N

    threshold = START + 22 * 3600
    split = poicast.temporal_split(dataset, threshold, seed=7)
    assert split.threshold == threshold
    assert split.validation_count + split.test_count == 3
    assert sorted(split.unseen_poi_ids) == ["p3", "p5"]
    assert abs(split.realized_unseen_ratio - 2.0 / 3.0) < 1e-12

    prior = poicast.estimate_prior(dataset, split, bucket_width_km=0.5,
                                   max_distance_km=5.0, smoothing_alpha=1.0)
    assert sum(prior.counts) == 3  # consecutive same-user train pairs
    assert abs(sum(prior.probabilities) - 1.0) < 1e-9
    assert prior.probability(0.1) > 0.0

    found, realized = poicast.find_threshold_for_unseen_ratio(dataset, 2.0 / 3.0)
    assert abs(realized - 2.0 / 3.0) < 0.05

    assert poicast.parse_checkins("").total_visits == 0

    try:
        poicast.parse_checkins("not\ta\tcheckin\n")
    except RuntimeError:
        pass  # DataError maps onto RuntimeError
    else:
        raise AssertionError("majority-malformed input should raise")

    with tempfile.TemporaryDirectory() as tmp:
        data_path = os.path.join(tmp, "checkins.tsv")
        with open(data_path, "w") as f:
            f.write(checkins_tsv())
        config = {
            "data_path": data_path,
            "output_dir": os.path.join(tmp, "out"),
            "seed": 7,
            "split": {"threshold": threshold},
        }
        poicast.run("ingest", json.dumps(config))
        assert os.path.exists(os.path.join(tmp, "out", "manifest.json"))
        try:
            poicast.run("bogus", json.dumps(config))
        except ValueError:
            pass  # ConfigError maps onto ValueError
        else:
            raise AssertionError("unknown command should raise")

    print("ok")


if __name__ == "__main__":
    main()
