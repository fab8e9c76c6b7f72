from networks.spec import Arch, ModelSpec

FFN_EXPANSION = 4


def attention_layer_count(d: int) -> int:
    """Q, K, V (3 d^2), FFN (8 d^2) and the FFN hidden bias (4 d)."""
    return 11 * d * d + FFN_EXPANSION * d


def param_count(spec: ModelSpec) -> int:
    """Closed-form number of free parameters of the model built from spec."""
    d, n_con, n = spec.d, spec.n_con, spec.n_symbols
    if spec.arch is Arch.TRANSFORMER:
        return spec.layers * attention_layer_count(d) + d * n
    if spec.arch is Arch.CISFORMER:
        return spec.layers * n_con * attention_layer_count(d) + n_con * d * n
    if spec.arch is Arch.MLP:
        return spec.layers * d * d * n_con * (n_con + 1) // 2 + n_con * d * n
    h = spec.hidden
    first = 4 * (h * (d + h) + h)
    deeper = 4 * (h * 2 * h + h)
    return first + (spec.layers - 1) * deeper + h * n
