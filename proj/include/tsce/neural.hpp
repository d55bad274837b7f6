#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsce/common.hpp"

namespace tsce {

// 1..4 conv layers (kernels 8,5,3,3 truncated; same padding), each ReLU,
// then global average pooling over time, dense layer, softmax.
struct FcnArchitecture {
  int n_layers = 1;
  int first_filters = 4;  // one of {4, 16, 64, 128}; doubles per layer
  int n_classes = 2;

  std::vector<int> filter_counts() const;
  std::vector<int> kernel_sizes() const;
  void validate() const;
};

struct ConvLayer {
  int in_ch = 0, out_ch = 0, ksize = 0;
  Series w;  // [(out*in_ch + in)*ksize + dk]
  Series b;  // [out]
};

struct FcnModel {
  FcnArchitecture arch;
  std::vector<ConvLayer> convs;
  Series dense_w;  // [class*C_last + channel]
  Series dense_b;  // [class]
  Series training_log;  // mean loss per epoch
};

struct FcnActivations {
  std::vector<Matrix> pre;   // per layer: channels x L, before ReLU
  std::vector<Matrix> post;  // per layer: channels x L, after ReLU
  Series gap, logits, probs;
};

struct FcnGrads {
  std::vector<Series> conv_w, conv_b;
  Series dense_w, dense_b;
  Series input;
};

struct OptParams {
  bool adam = true;
  double lr = 0.001;
  int epochs = 200;
  int batch = 32;
};

// uniform(-s, s) weight init with s = sqrt(1/fan_in); zero biases.
FcnModel init_fcn(const FcnArchitecture& arch, std::uint64_t seed);

void fcn_forward(const FcnModel& m, const Series& x, FcnActivations& act);
Series fcn_predict_proba(const FcnModel& m, const Series& x);
int fcn_predict_class(const FcnModel& m, const Series& x);

// Gradients of cross-entropy(probs, y) w.r.t. every parameter and the input.
FcnGrads fcn_backward(const FcnModel& m, const Series& x, int y);

// Generic backward from d(scalar)/d(logits); shared by loss and logit paths.
FcnGrads fcn_backward_from_dlogits(const FcnModel& m, const Series& x,
                                   const FcnActivations& act, const Series& dlogits);

// Gradient of the pre-softmax logit of class_index w.r.t. the input.
Series class_input_gradient(const FcnModel& m, const Series& x, int class_index);

// d(logit_class)/d(last conv activations): channels x L (Grad-CAM input).
Matrix logit_grad_last_conv(const FcnModel& m, const Series& x, int class_index);

FcnModel fit_fcn(const Matrix& X, const std::vector<int>& y,
                 const FcnArchitecture& arch, const OptParams& opt,
                 std::uint64_t seed);

void save_fcn_json(const FcnModel& m, const std::string& path);
FcnModel load_fcn_json(const std::string& path);

}  // namespace tsce
