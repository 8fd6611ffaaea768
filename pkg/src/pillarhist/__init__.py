"""Pillar feature encoders for LiDAR point clouds and post-training quantization tooling.

Two encoders turn the points of a non-empty pillar into one feature vector:

* ``pfe``: 10-channel point decoration, point-wise linear layer, max-pool.
* ``pillarhist``: height histogram and per-bin mean intensity plus the pillar
  center, followed by a single pillar-level linear projection.
"""

from .core import (GridConfig, MalformedFileError, MalformedValueError, Point, PointCloud,
                   filter_to_range, read_point_cloud, read_point_cloud_bin, read_point_cloud_text,
                   write_point_cloud_bin, write_point_cloud_text)
from .hist import HistConfig, HistFeature, encode_pillarhist, hist_encode, hist_project
from .pfe import (DecoratedPillar, LinearLayer, PillarFeature, decorate, encode_pfe,
                  linear_forward, maxpool_points)
from .pillarization import Pillar, PillarIndex, pillar_index_of, pillarize
from .pipeline import EncoderPipeline
from .quant import (DegenerateRangeError, ErrorDecomposition, GridSearchConfig, LayerQuant,
                    QuantizedTensor, QuantParams, calibrate_gridsearch, calibrate_maxmin, dequantize,
                    error_decompose, naive_ptq, quantize, quantized_linear_forward, scale_from_range)

__version__ = "0.1.0"
