#include "sparselab/flops.hpp"

#include <stdexcept>
#include <string>

namespace sparselab {

double layer_forward_flops(const LayerSpec& layer, const Shape& input_sample, double density) {
    if (!(density >= 0.0 && density <= 1.0)) {
        throw std::invalid_argument("layer_forward_flops: density must be in [0, 1], got " +
                                    std::to_string(density));
    }
    switch (layer.kind) {
        case LayerKind::affine:
            return 2.0 * static_cast<double>(layer.in_features) *
                   static_cast<double>(layer.out_features) * density;
        case LayerKind::conv2d: {
            const auto out = layer.output_shape(input_sample, 0);
            return 2.0 * static_cast<double>(layer.kernel_h * layer.kernel_w) *
                   static_cast<double>(layer.in_channels * layer.out_channels) *
                   static_cast<double>(out[1] * out[2]) * density;
        }
        case LayerKind::relu:
            return static_cast<double>(shape_numel(input_sample));
        case LayerKind::flatten:
            return 0.0;
        case LayerKind::avgpool2d:
            return static_cast<double>(shape_numel(layer.output_shape(input_sample, 0)));
    }
    return 0.0;
}

double network_forward_flops(const std::vector<LayerSpec>& layers, const Shape& input,
                             const std::vector<std::string>& layer_ids,
                             const std::vector<double>& layer_density) {
    if (layer_ids.size() != layer_density.size()) {
        throw std::invalid_argument("network_forward_flops: ids/densities size mismatch");
    }
    const auto shapes = infer_shapes(layers, input);
    double total = 0.0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        double density = 1.0;
        if (layers[i].has_params()) {
            const auto id = "layer" + std::to_string(i) + "." + layer_kind_name(layers[i].kind);
            for (std::size_t k = 0; k < layer_ids.size(); ++k) {
                if (layer_ids[k] == id) {
                    density = layer_density[k];
                    break;
                }
            }
        }
        total += layer_forward_flops(layers[i], shapes[i], density);
    }
    return total;
}

std::vector<TrajectoryPoint> density_trajectory(const RunRecord& run) {
    std::vector<TrajectoryPoint> out;
    TrajectoryPoint init;
    init.step = -1;
    init.global_density = run.initial_global_density();
    for (std::size_t i = 0; i < run.layer_ids.size(); ++i) {
        init.layer_density.push_back(run.layer_numel[i] == 0
                                         ? 1.0
                                         : static_cast<double>(run.initial_nnz[i]) /
                                               static_cast<double>(run.layer_numel[i]));
    }
    out.push_back(std::move(init));

    for (std::size_t e = 0; e < run.events.size(); ++e) {
        const auto& ev = run.events[e];
        TrajectoryPoint pt;
        pt.step = ev.step;
        pt.global_density = run.global_density_after(e);
        pt.layer_density.reserve(run.layer_ids.size());
        for (std::size_t i = 0; i < run.layer_ids.size(); ++i) {
            if (i >= ev.layers.size() || ev.layers[i].layer_id != run.layer_ids[i]) {
                throw std::invalid_argument("density_trajectory: event " + std::to_string(e) +
                                            " does not cover layer " + run.layer_ids[i]);
            }
            const auto& le = ev.layers[i];
            pt.layer_density.push_back(
                le.numel == 0 ? 1.0 : static_cast<double>(le.nnz) / static_cast<double>(le.numel));
        }
        out.push_back(std::move(pt));
    }
    return out;
}

FlopsReport train_flops(const RunRecord& run, const std::vector<LayerSpec>& layers,
                        const Shape& input, const FlopsOptions& opts) {
    FlopsReport rep;
    const std::vector<double> all_dense(run.layer_ids.size(), 1.0);
    rep.dense_forward_flops = network_forward_flops(layers, input, run.layer_ids, all_dense);

    const auto traj = density_trajectory(run);
    const auto batch = static_cast<double>(run.batch_size);
    const auto actual_steps = static_cast<std::int64_t>(run.step_loss.size());

    double total = 0.0;
    double cur_f = network_forward_flops(layers, input, run.layer_ids, traj[0].layer_density);
    std::int64_t prev_step = -1;
    for (std::size_t e = 0; e < run.events.size(); ++e) {
        const auto& ev = run.events[e];
        if (ev.step >= actual_steps) break;
        const auto steps_in_segment = ev.step - prev_step;
        total += static_cast<double>(steps_in_segment) * 3.0 * cur_f * batch;
        if (opts.charge_dense_regen && ev.used_dense_gradient) {
            total += 2.0 * (rep.dense_forward_flops - cur_f) * batch;
        }
        cur_f = network_forward_flops(layers, input, run.layer_ids, traj[e + 1].layer_density);
        prev_step = ev.step;
    }
    total += static_cast<double>(actual_steps - 1 - prev_step) * 3.0 * cur_f * batch;

    rep.train_flops_total = total;
    rep.dense_train_flops_total =
        3.0 * rep.dense_forward_flops * batch * static_cast<double>(actual_steps);
    rep.forward_flops_per_sample =
        network_forward_flops(layers, input, run.layer_ids, traj.back().layer_density);
    rep.normalized_forward =
        rep.dense_forward_flops == 0.0 ? 1.0 : rep.forward_flops_per_sample / rep.dense_forward_flops;
    rep.normalized_train = rep.dense_train_flops_total == 0.0
                               ? 1.0
                               : rep.train_flops_total / rep.dense_train_flops_total;
    return rep;
}

}  // namespace sparselab
