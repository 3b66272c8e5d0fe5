"""Campus heat-stress digital twin.

A scene + weather pair drives an hourly UTCI simulator; a spatiotemporal
transformer forecasts the next 24 hours; routing and an HTTP service turn the
rasters into decisions. See the README for the CLI and service endpoints.
"""

from .grids import GrdError, GrdMeta, load_raster_grd, save_raster_grd
from .meteo import (DEFAULT_THRESHOLD_C, HeatwaveSpec, HeatWavePeriod,
                    MeteoError, MeteoRecord, MeteoSeries, detect_heatwaves,
                    generate_synthetic_meteo, load_meteo_csv,
                    percentile_threshold, save_meteo_csv, study_window)
from .microclimate import (MicroclimateParams, STRESS_BANDS, STRESS_LABELS,
                           UtciStack, band_proportions, load_stack, save_stack,
                           shadow_mask, simulate_stack, sky_view_factor,
                           stress_category, tmrt_map, utci_map, utci_point)
from .scene import (GridScene, LandCover, SceneSpec, SceneSpecError,
                    generate_synthetic_scene, load_scene, save_scene,
                    validate_scene)
from .solar import SunPosition, solar_position

__version__ = "0.1.0"
