"""Conversion and inference toolkit for low-latency rate-encoded spiking networks."""

from .convert import (
    convert_bias,
    convert_network,
    convert_weights,
    decode_spike_counts,
    layer_threshold,
    step_constant,
)
from .ctt import CttConfig, ThresholdMap, ctt_loss, ctt_train, ctt_update
from .engine import (
    NeuronState,
    SpikeStats,
    asg_layer,
    asg_network_forward,
    encode_input,
    if_layer_step,
    if_layer_train,
    if_network_forward,
    spike_report,
)
from .ice import IceConfig, ice_expand, ice_then_encode
from .network import (
    MODE_ANN,
    MODE_SNN,
    Layer,
    NetworkSpec,
    ann_forward,
    fold_network,
    linear_forward,
)
from .quantize import (
    BatchNormParams,
    VRConfig,
    clamp,
    fold_batchnorm,
    grid_levels,
    quantize,
)
from .tensor import (
    LayerGeometry,
    SpikeTrain,
    Tensor,
    avgpool_forward,
    conv2d_forward,
    dense_forward,
)

__version__ = "0.1.0"
