"""Published change and forecast tables (km^2), keyed by canonical class name."""

import math

# class: (Dec 2011, Dec 2018, change in area, change %)
CHANGE_2011_2018 = {
    "chaparral": (0.000, 0.000, 0.000, 0.000),
    "commercial_area": (3.811, 3.063, -0.748, -19.645),
    "dense_residential": (0.064, 0.139, 0.075, 116.779),
    "freeway": (0.006, 0.088, 0.082, 1356.867),
    "open_space": (2.308, 0.755, -1.552, -67.254),
    "meadow": (0.000, 0.005, 0.005, math.inf),
    "medium_residential": (0.000, 0.350, 0.350, math.inf),
    "parking_lot": (0.073, 0.023, -0.050, -68.236),
    "road_junction": (0.117, 1.930, 1.812, 1540.102),
    "sparse_residential": (0.117, 0.025, -0.091, -77.938),
}

# class: (Dec 2018, Dec 2025)
FORECAST_2018_2025 = {
    "chaparral": (0.000, 0.000),
    "commercial_area": (3.063, 3.175),
    "dense_residential": (0.139, 0.076),
    "freeway": (0.088, 0.184),
    "open_space": (0.755, 0.374),
    "meadow": (0.005, 0.018),
    "medium_residential": (0.350, 0.446),
    "parking_lot": (0.023, 0.124),
    "road_junction": (1.930, 2.131),
    "sparse_residential": (0.025, 0.045),
}

BUI_2011, BUI_2018, BUI_2025 = 0.644, 0.880, 0.940


def column(table, i, palette):
    return [table[name][i] for name in palette.names]
