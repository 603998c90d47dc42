from dataclasses import dataclass


@dataclass(frozen=True)
class DatasetEntry:
    name: str
    domain: str
    frequency: str
    length: int
    channels: int
    split: str


# Benchmark lengths, channel counts and chronological splits of the standard
# long-term forecasting datasets. Published CSVs can be longer than `length`.
KNOWN_DATASETS = [
    DatasetEntry("ETTh1", "electricity", "1h", 14400, 7, "6:2:2"),
    DatasetEntry("ETTh2", "electricity", "1h", 14400, 7, "6:2:2"),
    DatasetEntry("ETTm1", "electricity", "15min", 57600, 7, "6:2:2"),
    DatasetEntry("ETTm2", "electricity", "15min", 57600, 7, "6:2:2"),
    DatasetEntry("Weather", "environment", "10min", 52696, 21, "7:1:2"),
    DatasetEntry("Electricity", "electricity", "1h", 26304, 321, "7:1:2"),
    DatasetEntry("Solar", "energy", "10min", 52560, 137, "6:2:2"),
    DatasetEntry("Traffic", "traffic", "1h", 17544, 862, "7:1:2"),
]

_BY_NAME = {entry.name.lower(): entry for entry in KNOWN_DATASETS}


def lookup(name: str | None) -> DatasetEntry | None:
    if not name:
        return None
    return _BY_NAME.get(name.lower())
