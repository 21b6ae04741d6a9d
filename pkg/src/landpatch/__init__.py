"""Patch-based land-use segmentation, change analytics and area forecasting."""

from .analytics import (AreaReport, ChangeRow, built_up_index, change_table, difference_map,
                        percent_change, pixels_to_area)
from .classifier import (CentroidClassifier, ConstantClassifier, LinearSoftmaxClassifier,
                         LinearSoftmaxModel, PatchFeatures, classify, classify_linear,
                         extract_features, load_model, save_model)
from .forecast import (ArimaModel, ClassAreaSeries, Quarter, acf, difference, fit_arima,
                       forecast, forecast_table, regularize, undifference)
from .raster import LandUseClass, Palette, Raster, default_palette, load_raster, save_raster
from .segmenter import (SegmentationMap, SegmenterConfig, class_pixel_counts, enumerate_patches,
                        render, segment)

__version__ = "0.1.0"
