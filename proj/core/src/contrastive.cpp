#include "canvasinfill/contrastive.hpp"

#include <algorithm>
#include <string>

#include "canvasinfill/errors.hpp"

namespace nn = torch::nn;

namespace canvasinfill {

EncoderImpl::EncoderImpl(EncoderOptions options) : options_(options) {
  int64_t in = options_.in_channels;
  for (int s = 0; s < kEncoderStages; ++s) {
    const int64_t out = options_.widths[static_cast<size_t>(s)];
    nn::Sequential stage(
        nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(2).padding(1)),
        nn::GroupNorm(nn::GroupNormOptions(std::min(options_.norm_groups, out), out)),
        nn::ReLU());
    stages_.push_back(register_module("stage" + std::to_string(s + 1), stage));
    in = out;
  }
  projection_ = register_module("projection", nn::Linear(in, options_.repr_dim));
}

std::vector<torch::Tensor> EncoderImpl::features(const torch::Tensor& x) {
  CANVASINFILL_EXPECT(x.dim() == 4 && x.size(1) == options_.in_channels,
                      "encoder expects N×" + std::to_string(options_.in_channels) + "×H×W input");
  std::vector<torch::Tensor> maps;
  maps.reserve(stages_.size());
  torch::Tensor h = x;
  for (auto& stage : stages_) {
    h = stage->forward(h);
    maps.push_back(h);
  }
  return maps;
}

torch::Tensor EncoderImpl::project(const torch::Tensor& last_stage) {
  return projection_->forward(last_stage.mean({2, 3}));
}

torch::Tensor l2_normalize_rows(const torch::Tensor& x) {
  CANVASINFILL_EXPECT(x.dim() == 2, "l2_normalize_rows expects a 2-D tensor");
  auto norms = x.norm(2, 1, /*keepdim=*/true);
  if (norms.min().item<double>() < 1e-12) {
    throw DegenerateRepresentationError("representation has near-zero norm before normalization");
  }
  return x / norms;
}

torch::Tensor encode_batch(Encoder& encoder, const torch::Tensor& inputs) {
  const auto size = encoder->options().image_size;
  CANVASINFILL_EXPECT(inputs.dim() == 4 && inputs.size(2) == size && inputs.size(3) == size,
                      "encoder input must be N×4×" + std::to_string(size) + "×" + std::to_string(size));
  auto maps = encoder->features(inputs);
  return l2_normalize_rows(encoder->project(maps.back()));
}

torch::Tensor encode(Encoder& encoder, const MaskedImage& x) {
  return encode_batch(encoder, x.network_input().unsqueeze(0)).squeeze(0);
}

KeyQueue::KeyQueue(int64_t capacity, int64_t dim, torch::Dtype dtype) : capacity_(capacity), dim_(dim) {
  CANVASINFILL_EXPECT(capacity >= 1, "queue capacity must be at least 1");
  CANVASINFILL_EXPECT(dim >= 1, "queue key dimension must be at least 1");
  storage_ = torch::zeros({capacity, dim}, torch::TensorOptions().dtype(dtype));
}

void KeyQueue::enqueue(const torch::Tensor& keys) {
  CANVASINFILL_EXPECT(storage_.defined(), "queue is not initialized");
  CANVASINFILL_EXPECT(keys.dim() == 2 && keys.size(1) == dim_, "keys must be B×d");
  const int64_t batch = keys.size(0);
  CANVASINFILL_EXPECT(batch <= capacity_, "batch larger than queue capacity");
  torch::NoGradGuard no_grad;
  auto rows = keys.detach().to(storage_.dtype());
  for (int64_t i = 0; i < batch; ++i) {
    if (size_ < capacity_) {
      storage_[(head_ + size_) % capacity_].copy_(rows[i]);
      ++size_;
    } else {
      storage_[head_].copy_(rows[i]);
      head_ = (head_ + 1) % capacity_;
      ++total_evicted_;
    }
    ++total_enqueued_;
  }
}

torch::Tensor KeyQueue::keys() const {
  if (size_ == 0) return storage_.slice(0, 0, 0).clone();
  const int64_t end = head_ + size_;
  if (end <= capacity_) return storage_.slice(0, head_, end).clone();
  return torch::cat({storage_.slice(0, head_, capacity_), storage_.slice(0, 0, end - capacity_)}, 0);
}

KeyQueue KeyQueue::from_keys(int64_t capacity, const torch::Tensor& ordered, int64_t total_enqueued) {
  CANVASINFILL_EXPECT(ordered.dim() == 2 && ordered.size(0) <= capacity,
                      "stored queue contents exceed capacity");
  KeyQueue q(capacity, ordered.size(1), ordered.scalar_type());
  q.enqueue(ordered);
  q.total_enqueued_ = total_enqueued;
  q.total_evicted_ = total_enqueued - q.size_;
  return q;
}

InfoNceBatch info_nce_batch(const torch::Tensor& z_q, const torch::Tensor& z_pos,
                            const torch::Tensor& negatives, double tau) {
  CANVASINFILL_EXPECT(tau > 0.0, "temperature must be positive");
  CANVASINFILL_EXPECT(negatives.dim() == 2 && negatives.size(0) >= 1, "need at least one queued key");
  CANVASINFILL_EXPECT(z_q.dim() == 2 && z_q.sizes() == z_pos.sizes() && z_q.size(1) == negatives.size(1),
                      "query, positive and queued keys must share dimension d");
  auto pos = (z_q * z_pos).sum(1, /*keepdim=*/true);
  auto neg = torch::matmul(z_q, negatives.to(z_q.dtype()).t());
  auto logits = torch::cat({pos, neg}, 1) / tau;
  auto loss = -torch::log_softmax(logits, 1).select(1, 0).mean();
  double accuracy = 0.0;
  {
    torch::NoGradGuard no_grad;
    auto best_negative = std::get<0>(neg.max(1));
    accuracy = (pos.squeeze(1) > best_negative).to(torch::kDouble).mean().item<double>();
  }
  return {loss, accuracy};
}

torch::Tensor info_nce(const torch::Tensor& z_q, const torch::Tensor& z_pos, const KeyQueue& queue, double tau) {
  CANVASINFILL_EXPECT(!queue.empty(), "InfoNCE needs a non-empty key queue");
  CANVASINFILL_EXPECT(z_q.dim() == 1 && z_pos.dim() == 1, "representations must be d-vectors");
  return info_nce_batch(z_q.unsqueeze(0), z_pos.unsqueeze(0), queue.keys(), tau).loss;
}

void momentum_update(const Encoder& query, Encoder& key, double m) {
  CANVASINFILL_EXPECT(m >= 0.0 && m < 1.0, "momentum must lie in [0, 1)");
  torch::NoGradGuard no_grad;
  auto q_params = query->named_parameters();
  auto k_params = key->named_parameters();
  CANVASINFILL_EXPECT(q_params.size() == k_params.size(), "encoders have different parameter sets");
  for (const auto& item : q_params) {
    auto* target = k_params.find(item.key());
    CANVASINFILL_EXPECT(target != nullptr, "key encoder lacks parameter " + item.key());
    CANVASINFILL_EXPECT(target->sizes() == item.value().sizes(), "shape mismatch for " + item.key());
    target->mul_(m).add_(item.value(), 1.0 - m);
  }
}

void copy_parameters(const torch::nn::Module& src, torch::nn::Module& dst) {
  torch::NoGradGuard no_grad;
  auto s = src.named_parameters();
  auto d = dst.named_parameters();
  CANVASINFILL_EXPECT(s.size() == d.size(), "modules have different parameter sets");
  for (const auto& item : s) {
    auto* target = d.find(item.key());
    CANVASINFILL_EXPECT(target != nullptr && target->sizes() == item.value().sizes(),
                        "parameter mismatch for " + item.key());
    target->copy_(item.value());
  }
  auto sb = src.named_buffers();
  auto db = dst.named_buffers();
  for (const auto& item : sb) {
    if (auto* target = db.find(item.key())) target->copy_(item.value());
  }
}

std::pair<MaskedImage, MaskedImage> make_positive_pair(const torch::Tensor& image, const MaskSpec& spec,
                                                        std::mt19937_64& rng) {
  CANVASINFILL_EXPECT(image.dim() == 3 && image.size(0) == 3, "image must be 3×H×W");
  const auto h = image.size(1);
  const auto w = image.size(2);
  Mask first = generate_mask(spec, h, w, rng);
  Mask second = generate_mask(spec, h, w, rng);
  return {apply_mask(image, first), apply_mask(image, second)};
}

void ContrastiveConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (queue_capacity < 1) throw ConfigError("queue_capacity must be at least 1");
  if (repr_dim < 1) throw ConfigError("repr_dim must be at least 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
}

PretrainState PretrainState::create(const EncoderOptions& encoder, const ContrastiveConfig& config,
                                    uint64_t init_seed, uint64_t data_seed) {
  config.validate();
  PretrainState state;
  torch::manual_seed(init_seed);
  state.query = Encoder(encoder);
  state.key = Encoder(encoder);
  copy_parameters(*state.query, *state.key);
  for (auto& p : state.key->parameters()) p.set_requires_grad(false);
  state.queue = KeyQueue(config.queue_capacity, encoder.repr_dim);
  state.optimizer = std::make_unique<torch::optim::SGD>(
      state.query->parameters(), torch::optim::SGDOptions(config.lr).momentum(config.sgd_momentum));
  state.rng.seed(data_seed);
  return state;
}

PretrainStepResult pretrain_step(PretrainState& state, const torch::Tensor& images, const MaskSpec& masks,
                                 const ContrastiveConfig& config, bool hflip) {
  CANVASINFILL_EXPECT(images.dim() == 4 && images.size(1) == 3, "images must be N×3×H×W");
  const int64_t n = images.size(0);
  std::vector<torch::Tensor> q_inputs;
  std::vector<torch::Tensor> k_inputs;
  std::bernoulli_distribution flip(0.5);
  for (int64_t i = 0; i < n; ++i) {
    torch::Tensor image = images[i];
    if (hflip && flip(state.rng)) image = image.flip({2});
    auto [xq, xk] = make_positive_pair(image, masks, state.rng);
    q_inputs.push_back(xq.network_input());
    k_inputs.push_back(xk.network_input());
  }
  auto q_batch = torch::stack(q_inputs);
  auto k_batch = torch::stack(k_inputs);

  auto z_q = encode_batch(state.query, q_batch);
  torch::Tensor z_k;
  {
    torch::NoGradGuard no_grad;
    z_k = encode_batch(state.key, k_batch).detach();
  }
  const bool bootstrap = state.queue.empty();
  if (bootstrap) state.queue.enqueue(z_k);

  auto result = info_nce_batch(z_q, z_k, state.queue.keys(), config.tau);
  state.optimizer->zero_grad();
  result.loss.backward();
  state.optimizer->step();
  momentum_update(state.query, state.key, config.momentum);
  if (!bootstrap) state.queue.enqueue(z_k);
  ++state.step;
  return {result.loss.item<double>(), result.accuracy};
}

}  // namespace canvasinfill
