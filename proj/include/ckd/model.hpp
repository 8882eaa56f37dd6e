#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ckd/tape.hpp"
#include "ckd/tensor.hpp"

namespace ckd {

struct ModelConfig {
    std::size_t face_dim = 64;
    std::size_t peri_dim = 32;
    std::vector<std::size_t> trunk_widths{64, 64, 64};
    std::size_t head_width = 0;  // 0 = last trunk width
    std::size_t embed_dim = 32;
    std::size_t num_classes = 64;
    bool share_weights = true;
    bool share_batch_stats = true;
    bool has_peri = true;
    bool has_face = true;
    double bn_momentum = 0.9;
    double bn_epsilon = 1e-5;
    std::uint64_t seed = 0;

    std::size_t head_width_or_default() const {
        return head_width ? head_width : trunk_widths.back();
    }
    void validate() const;
};

struct BnStats {
    Tensor mean;
    Tensor var;
};

// Trunk + per-view head/classifier parameters with batch-norm running
// statistics. Parameter keys are stable strings so that the periocular
// branch of an unshared two-view model matches a standalone periocular
// model tensor-for-tensor.
struct ModelState {
    ModelConfig config;
    std::map<std::string, Tensor> params;
    std::map<std::string, BnStats> running;
    bool training = true;
};

ModelState init_model(const ModelConfig &config);

struct ForwardNodes {
    int z_p = -1, z_f = -1;  // logits B x K
    int u_p = -1, u_f = -1;  // embeddings B x embed
};

struct GraphBuild {
    ForwardNodes out;
    std::map<std::string, int> param_nodes;  // name -> tape input id (training only)
};

// Zero-pads periocular rows to face_dim (fixed, non-learned).
Tensor pad_to_face_width(const Tensor &x_peri, const ModelConfig &config);

// Builds the two-view forward graph on the tape. In training mode the
// parameters enter as differentiable inputs and running stats are
// updated from the batch statistics; in eval mode running stats are
// used and parameters are constants. Either view's input may be empty
// (rows == 0 is not allowed; pass has_peri/has_face = false instead).
GraphBuild forward_pair(Tape &t, ModelState &state, const Tensor &x_peri,
                        const Tensor &x_face);

// Eval-mode periocular embeddings (trunk + periocular head, classifier
// not applied). Errors if the state is in training mode.
Tensor embed(const ModelState &state, const Tensor &x_peri);
Tensor embed_face(const ModelState &state, const Tensor &x_face);

// Eval-mode logits for analysis channels; same contract as embed().
struct LogitsPair {
    Tensor z_p;
    Tensor z_f;
};
LogitsPair eval_logits(const ModelState &state, const Tensor &x_peri, const Tensor &x_face);

}  // namespace ckd
