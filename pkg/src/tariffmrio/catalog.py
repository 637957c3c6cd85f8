"""Reference code lists for ICIO-shaped worlds and the default income-group mapping."""
from __future__ import annotations

import csv
import io
from importlib import resources
from pathlib import Path

# 76 economies plus rest of world, in ICIO order.
ICIO_COUNTRIES = (
    "AUS", "AUT", "BEL", "CAN", "CHL", "COL", "CRI", "CZE", "DNK", "EST",
    "FIN", "FRA", "DEU", "GRC", "HUN", "ISL", "IRL", "ISR", "ITA", "JPN",
    "KOR", "LVA", "LTU", "LUX", "MEX", "NLD", "NZL", "NOR", "POL", "PRT",
    "SVK", "SVN", "ESP", "SWE", "CHE", "TUR", "GBR", "USA", "ARG", "BGD",
    "BLR", "BRA", "BRN", "BGR", "KHM", "CMR", "CHN", "CIV", "HRV", "CYP",
    "EGY", "HKG", "IND", "IDN", "JOR", "KAZ", "LAO", "MYS", "MLT", "MAR",
    "MMR", "NGA", "PAK", "PER", "PHL", "ROU", "RUS", "SAU", "SEN", "SGP",
    "ZAF", "TWN", "THA", "TUN", "UKR", "VNM", "ROW",
)

# 45 ICIO industries (ISIC rev. 4 groupings).
ICIO_SECTORS = (
    "D01T02", "D03", "D05T06", "D07T08", "D09", "D10T12", "D13T15", "D16",
    "D17T18", "D19", "D20", "D21", "D22", "D23", "D24", "D25", "D26", "D27",
    "D28", "D29", "D30", "D31T33", "D35", "D36T39", "D41T43", "D45T47",
    "D49", "D50", "D51", "D52", "D53", "D55T56", "D58T60", "D61", "D62T63",
    "D64T66", "D68", "D69T75", "D77T82", "D84", "D85", "D86T88", "D90T93",
    "D94T96", "D97T98",
)

SECTOR_NAMES = {
    "D01T02": "Agriculture", "D03": "Fishing", "D05T06": "Mining, energy",
    "D07T08": "Mining, non-energy", "D09": "Mining support", "D10T12": "Food and beverages",
    "D13T15": "Textiles", "D16": "Wood", "D17T18": "Paper and printing",
    "D19": "Coke and refined petroleum", "D20": "Chemicals", "D21": "Pharmaceuticals",
    "D22": "Rubber and plastics", "D23": "Non-metallic minerals", "D24": "Basic metals",
    "D25": "Fabricated metal", "D26": "Computer and electronic", "D27": "Electrical equipment",
    "D28": "Machinery n.e.c.", "D29": "Motor vehicles", "D30": "Other transport equipment",
    "D31T33": "Manufacturing n.e.c.", "D35": "Electricity and gas", "D36T39": "Water and waste",
    "D41T43": "Construction", "D45T47": "Retail trade", "D49": "Land transport",
    "D50": "Water transport", "D51": "Air transport", "D52": "Warehousing",
    "D53": "Postal", "D55T56": "Accommodation and food", "D58T60": "Publishing and broadcasting",
    "D61": "Telecommunications", "D62T63": "IT services", "D64T66": "Finance",
    "D68": "Real estate", "D69T75": "Professional services", "D77T82": "Administrative services",
    "D84": "Public administration", "D85": "Education", "D86T88": "Health",
    "D90T93": "Arts and recreation", "D94T96": "Other services", "D97T98": "Households",
}

INCOME_GROUPS = (
    "China", "HIC-Asia", "HIC-EU27", "HIC-Rest", "Low income", "Low income-Asia",
    "USA", "Upper middle-Asia", "Upper middle-Rest", "Other",
)
DEFAULT_GROUP = "Other"


def _read_mapping(text: str, source: str) -> dict[str, str]:
    mapping: dict[str, str] = {}
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or {"country", "group"} - set(reader.fieldnames):
        raise ValueError(f"{source}: income-group file needs 'country' and 'group' columns")
    for lineno, row in enumerate(reader, start=2):
        code = row["country"].strip()
        if code in mapping:
            raise ValueError(f"{source}:{lineno}: country {code!r} listed twice")
        mapping[code] = row["group"].strip()
    return mapping


def default_income_groups() -> dict[str, str]:
    text = resources.files("tariffmrio").joinpath("data/income_groups.csv").read_text("utf-8")
    return _read_mapping(text, "income_groups.csv")


def load_income_groups(path: str | Path | None = None) -> dict[str, str]:
    if path is None:
        return default_income_groups()
    return _read_mapping(Path(path).read_text("utf-8"), str(path))


def group_of(country: str, mapping: dict[str, str]) -> str:
    return mapping.get(country, DEFAULT_GROUP)
