#include "lamkit/model.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "lamkit/lav.hpp"

namespace lamkit {

namespace {

constexpr const char* kCheckpointMagic = "LAMKIT-CHECKPOINT";
constexpr int kCheckpointVersion = 1;

nlohmann::json encoder_to_json(const EncoderConfig& c) {
  return {{"layers", c.layers},
          {"heads", c.heads},
          {"d_model", c.d_model},
          {"d_ff", c.d_ff},
          {"dropout", c.dropout},
          {"vocab_size", c.vocab_size},
          {"activation", c.activation == Activation::kGelu ? "gelu" : "relu"}};
}

EncoderConfig encoder_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.layers = j.at("layers").get<Index>();
  c.heads = j.at("heads").get<Index>();
  c.d_model = j.at("d_model").get<Index>();
  c.d_ff = j.at("d_ff").get<Index>();
  c.dropout = j.at("dropout").get<double>();
  c.vocab_size = j.at("vocab_size").get<Index>();
  const auto act = j.at("activation").get<std::string>();
  if (act != "gelu" && act != "relu") throw std::invalid_argument("unknown activation '" + act + "'");
  c.activation = act == "gelu" ? Activation::kGelu : Activation::kRelu;
  return c;
}

Matrix normal_matrix(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 0.02);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string segment_prefix(const KernelSpec& kernel) {
  return "segment.m" + std::to_string(kernel.size) + ".";
}

void validate(const ModelConfig& config) {
  if (config.kernels.empty()) throw std::invalid_argument("model needs at least one kernel");
  std::set<Index> sizes;
  for (const auto& k : config.kernels) {
    validate(k);
    if (!sizes.insert(k.size).second) {
      throw std::invalid_argument("duplicate kernel size " + std::to_string(k.size));
    }
  }
  validate(config.segment_encoder);
  validate(config.document_encoder);
  validate(config.length_encoder);
  if (config.segment_encoder.vocab_size < 1) throw std::invalid_argument("segment encoder needs vocab_size >= 1");
  if (config.document_encoder.vocab_size != 0 || config.length_encoder.vocab_size != 0) {
    throw std::invalid_argument("document and length encoders take vectors (vocab_size 0)");
  }
  const Index d = config.segment_encoder.d_model;
  if (config.document_encoder.d_model != d || config.length_encoder.d_model != d) {
    throw std::invalid_argument("all encoders must share d_model");
  }
  if (config.class_count < 1) throw std::invalid_argument("class_count must be >= 1");
  if (config.classifier_dropout < 0.0 || config.classifier_dropout >= 1.0) {
    throw std::invalid_argument("classifier_dropout must be in [0, 1)");
  }
}

nlohmann::json to_json(const ModelConfig& config) {
  nlohmann::json kernels = nlohmann::json::array();
  for (const auto& k : config.kernels) {
    kernels.push_back({{"size", k.size}, {"stride", k.stride}, {"max_segments", k.max_segments}});
  }
  return {{"kernels", kernels},
          {"segment_encoder", encoder_to_json(config.segment_encoder)},
          {"document_encoder", encoder_to_json(config.document_encoder)},
          {"length_encoder", encoder_to_json(config.length_encoder)},
          {"class_count", config.class_count},
          {"task_kind", to_string(config.task_kind)},
          {"classifier_dropout", config.classifier_dropout},
          {"length_aware", config.length_aware}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  for (const auto& k : j.at("kernels")) {
    c.kernels.push_back({k.at("size").get<Index>(), k.at("stride").get<Index>(),
                         k.at("max_segments").get<Index>()});
  }
  c.segment_encoder = encoder_from_json(j.at("segment_encoder"));
  c.document_encoder = encoder_from_json(j.at("document_encoder"));
  c.length_encoder = encoder_from_json(j.at("length_encoder"));
  c.class_count = j.at("class_count").get<int>();
  c.task_kind = parse_task_kind(j.at("task_kind").get<std::string>());
  c.classifier_dropout = j.at("classifier_dropout").get<double>();
  c.length_aware = j.at("length_aware").get<bool>();
  validate(c);
  return c;
}

std::size_t model_parameter_count(const ModelConfig& config) {
  const auto d = static_cast<std::size_t>(config.segment_encoder.d_model);
  const auto c = static_cast<std::size_t>(config.class_count);
  std::size_t n = config.kernels.size() * encoder_parameter_count(config.segment_encoder);
  n += encoder_parameter_count(config.document_encoder);
  if (config.length_aware) n += encoder_parameter_count(config.length_encoder);
  n += d * d + d + d * c + c;
  return n;
}

Model initialize_model(const ModelConfig& config, std::uint64_t seed) {
  validate(config);
  Model model{config, {}};
  Rng rng(seed);
  for (const auto& k : config.kernels) {
    init_encoder(model.params, segment_prefix(k), config.segment_encoder, rng);
  }
  init_encoder(model.params, kDocumentPrefix, config.document_encoder, rng);
  if (config.length_aware) init_encoder(model.params, kLengthPrefix, config.length_encoder, rng);
  const Index d = config.segment_encoder.d_model;
  model.params.add(kHeadPrefix + "w1", normal_matrix(d, d, rng));
  model.params.add(kHeadPrefix + "b1", Matrix::Zero(1, d));
  model.params.add(kHeadPrefix + "w2", normal_matrix(d, config.class_count, rng));
  model.params.add(kHeadPrefix + "b2", Matrix::Zero(1, config.class_count));
  return model;
}

Tensor document_encode(const ModelConfig& config, const ParameterStore& params,
                       const Tensor& segment_vectors) {
  if (segment_vectors.rows() < 1) throw ShapeError("document_encode: empty segment sequence");
  return encoder_forward(params, kDocumentPrefix, config.document_encoder, segment_vectors,
                         std::vector<bool>(static_cast<std::size_t>(segment_vectors.rows()), true),
                         single_sequence(segment_vectors.rows()));
}

Tensor integrate(const Tensor& doc_out, const Tensor& len_out, const std::vector<Index>& len_row_of) {
  if (static_cast<Index>(len_row_of.size()) != doc_out.rows()) {
    throw ShapeError("integrate: kernel map covers " + std::to_string(len_row_of.size()) + " of " +
                     std::to_string(doc_out.rows()) + " rows");
  }
  for (Index k : len_row_of) {
    if (k < 0 || k >= len_out.rows()) {
      throw std::out_of_range("integrate: kernel index " + std::to_string(k) + " outside [0, " +
                              std::to_string(len_out.rows()) + ")");
    }
  }
  return add(doc_out, gather_rows(len_out, len_row_of));
}

Tensor hierarchical_pool(const Tensor& integrated, const std::vector<RowRange>& kernel_ranges,
                         Index kernels) {
  if (kernel_ranges.empty()) throw ShapeError("hierarchical_pool: no kernel ranges");
  for (const RowRange& r : kernel_ranges) {
    if (r.length < 1) throw ShapeError("hierarchical_pool: empty kernel range");
  }
  if (kernels < 1 || kernel_ranges.size() % static_cast<std::size_t>(kernels) != 0) {
    throw ShapeError("hierarchical_pool: ranges do not group by kernel count");
  }
  Tensor per_kernel = range_max(integrated, kernel_ranges);
  const Index groups = static_cast<Index>(kernel_ranges.size()) / kernels;
  return range_mean(per_kernel, uniform_blocks(groups, kernels));
}

Tensor hierarchical_pool(const Tensor& integrated, const std::vector<RowRange>& kernel_ranges) {
  return hierarchical_pool(integrated, kernel_ranges, static_cast<Index>(kernel_ranges.size()));
}

Tensor classify(const ModelConfig& config, const ParameterStore& params, const Tensor& doc_vectors,
                bool train, Rng* rng) {
  Tensor h = linear(doc_vectors, params.at(kHeadPrefix + "w1"), params.at(kHeadPrefix + "b1"));
  h = activation(h, Activation::kGelu);
  if (train && config.classifier_dropout > 0.0) {
    if (rng == nullptr) throw std::invalid_argument("classify: training run needs an RNG");
    h = dropout(h, config.classifier_dropout, *rng);
  }
  return linear(h, params.at(kHeadPrefix + "w2"), params.at(kHeadPrefix + "b2"));
}

Tensor classification_loss(const Tensor& logits, const Matrix& labels, TaskKind task_kind) {
  if ((labels.array() != 0.0 && labels.array() != 1.0).any()) {
    throw std::invalid_argument("classification_loss: labels must be 0 or 1");
  }
  return task_kind == TaskKind::kMultiLabel ? sigmoid_binary_cross_entropy(logits, labels)
                                            : softmax_cross_entropy(logits, labels);
}

Matrix label_matrix(std::span<const Document* const> docs, int class_count) {
  Matrix labels(static_cast<Index>(docs.size()), class_count);
  for (std::size_t b = 0; b < docs.size(); ++b) {
    if (static_cast<int>(docs[b]->labels.size()) != class_count) {
      throw ShapeError("document '" + docs[b]->id + "' has " + std::to_string(docs[b]->labels.size()) +
                       " label slots, model expects " + std::to_string(class_count));
    }
    for (int c = 0; c < class_count; ++c) {
      labels(static_cast<Index>(b), c) = docs[b]->labels[static_cast<std::size_t>(c)];
    }
  }
  return labels;
}

BatchTrace forward_batch(const ModelConfig& config, const ParameterStore& params,
                         std::span<const Document* const> docs, const ForwardOptions& options) {
  if (docs.empty()) throw std::invalid_argument("forward_batch: empty batch");
  const auto batch = static_cast<Index>(docs.size());
  const auto kernels = static_cast<Index>(config.kernels.size());
  const Index d = config.segment_encoder.d_model;
  const EncoderRun run{options.train, options.rng};
  const bool lav = config.length_aware;

  BatchTrace trace;
  trace.chunk_counts.assign(docs.size(), std::vector<Index>(config.kernels.size()));

  // Row of (kernel k, doc b, segment 0) inside the kernel-major CLS stack.
  std::vector<std::vector<Index>> cls_offset(config.kernels.size(), std::vector<Index>(docs.size()));
  Index cls_base = 0;
  for (Index k = 0; k < kernels; ++k) {
    const KernelSpec& kernel = config.kernels[static_cast<std::size_t>(k)];
    const Index width = kernel.size + 1;
    std::vector<int> ids;
    std::vector<bool> mask;
    Index segments = 0;
    for (Index b = 0; b < batch; ++b) {
      const SegmentBatch sb = segment_document(*docs[static_cast<std::size_t>(b)], kernel);
      trace.chunk_counts[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)] = sb.n_segments;
      trace.truncated_tokens += sb.truncated_tokens;
      cls_offset[static_cast<std::size_t>(k)][static_cast<std::size_t>(b)] = cls_base + segments;
      ids.insert(ids.end(), sb.segments.data(), sb.segments.data() + sb.segments.size());
      mask.insert(mask.end(), sb.token_mask.data(), sb.token_mask.data() + sb.token_mask.size());
      segments += sb.n_segments;
    }
    const SequenceLayout layout = uniform_blocks(segments, width);
    Tensor encoded = encoder_forward(params, segment_prefix(kernel), config.segment_encoder, ids, mask,
                                     layout, run);
    trace.kernel_cls.push_back(extract_cls(encoded, layout));
    cls_base += segments;
  }

  // Document-major ordering plus the bookkeeping shared by later stages.
  std::vector<Index> order;
  std::vector<RowRange> kernel_ranges;
  SequenceLayout doc_layout;
  std::vector<Index> len_row_of;
  Matrix positions;
  std::vector<Index> position_index;
  for (Index b = 0; b < batch; ++b) {
    const Index doc_begin = static_cast<Index>(order.size());
    for (Index k = 0; k < kernels; ++k) {
      const Index n = trace.chunk_counts[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)];
      kernel_ranges.push_back({static_cast<Index>(order.size()), n});
      for (Index j = 0; j < n; ++j) {
        order.push_back(cls_offset[static_cast<std::size_t>(k)][static_cast<std::size_t>(b)] + j);
        len_row_of.push_back(b * kernels + k);
        position_index.push_back(j + 1);
      }
    }
    doc_layout.push_back({doc_begin, static_cast<Index>(order.size()) - doc_begin});
  }
  const auto total = static_cast<Index>(order.size());
  trace.segment_vectors = gather_rows(concat_rows(trace.kernel_cls), order);

  Tensor doc_input = trace.segment_vectors;
  if (lav && options.add_positions) {
    Index longest = 0;
    for (Index p : position_index) longest = std::max(longest, p);
    const PositionEmbeddingTable table(longest, d, 1);
    Matrix pe(total, d);
    for (Index r = 0; r < total; ++r) pe.row(r) = table.row(position_index[static_cast<std::size_t>(r)]);
    doc_input = add(doc_input, Tensor(std::move(pe)));
  }
  const std::vector<bool> all_rows(static_cast<std::size_t>(total), true);
  trace.document_output = encoder_forward(params, kDocumentPrefix, config.document_encoder, doc_input,
                                          all_rows, doc_layout, run);

  if (lav) {
    Matrix pe(batch * kernels, d);
    for (Index b = 0; b < batch; ++b) {
      for (Index k = 0; k < kernels; ++k) {
        pe.row(b * kernels + k) =
            sinusoidal_pe(trace.chunk_counts[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)], d);
      }
    }
    trace.length_vectors = add(range_mean(trace.segment_vectors, kernel_ranges), Tensor(std::move(pe)));
    trace.length_output = encoder_forward(
        params, kLengthPrefix, config.length_encoder, trace.length_vectors,
        std::vector<bool>(static_cast<std::size_t>(batch * kernels), true), uniform_blocks(batch, kernels),
        run);
    const Tensor& len_used =
        options.zero_length_output ? Tensor::zeros(batch * kernels, d) : trace.length_output;
    trace.integrated = integrate(trace.document_output, len_used, len_row_of);
  } else {
    trace.integrated = trace.document_output;
  }

  trace.pooled = hierarchical_pool(trace.integrated, kernel_ranges, kernels);
  trace.logits = classify(config, params, trace.pooled, options.train, options.rng);
  return trace;
}

DocumentForwardTrace forward_document(const ModelConfig& config, const ParameterStore& params,
                                      const Document& doc, const ForwardOptions& options) {
  const Document* one[] = {&doc};
  BatchTrace bt = forward_batch(config, params, one, options);
  DocumentForwardTrace t;
  t.segment_vectors = bt.kernel_cls;
  t.length_vectors = bt.length_vectors;
  t.document_output = bt.document_output;
  t.length_output = bt.length_output;
  t.integrated = bt.integrated;
  t.pooled = bt.pooled;
  t.logits = bt.logits;
  t.chunk_counts = bt.chunk_counts.front();
  return t;
}

void save_checkpoint(const Model& model, std::ostream& out) {
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << to_json(model.config).dump() << '\n';
  out << "parameters " << model.params.size() << '\n';
  for (const auto& [name, t] : model.params.entries()) {
    out << name << ' ' << t.rows() << ' ' << t.cols() << '\n';
    const Matrix& v = t.value();
    for (Index r = 0; r < v.rows(); ++r) {
      for (Index c = 0; c < v.cols(); ++c) out << (c ? " " : "") << format_double(v(r, c));
      out << '\n';
    }
  }
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  save_checkpoint(model, out);
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Model load_checkpoint(std::istream& in) {
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != kCheckpointMagic || version != kCheckpointVersion) {
    throw std::runtime_error("not a version-" + std::to_string(kCheckpointVersion) + " checkpoint");
  }
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  Model model{model_config_from_json(nlohmann::json::parse(line)), {}};
  std::string keyword;
  std::size_t count = 0;
  in >> keyword >> count;
  if (keyword != "parameters") throw std::runtime_error("checkpoint: missing parameter count");
  for (std::size_t p = 0; p < count; ++p) {
    std::string name;
    Index rows = 0;
    Index cols = 0;
    if (!(in >> name >> rows >> cols)) throw std::runtime_error("checkpoint: truncated parameter header");
    Matrix values(rows, cols);
    std::string token;
    for (Index i = 0; i < values.size(); ++i) {
      if (!(in >> token)) throw std::runtime_error("checkpoint: truncated values for " + name);
      double v = 0.0;
      auto res = std::from_chars(token.data(), token.data() + token.size(), v);
      if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
        throw std::runtime_error("checkpoint: bad number '" + token + "' in " + name);
      }
      values.data()[i] = v;
    }
    model.params.add(name, std::move(values));
  }
  if (model.params.scalar_count() != model_parameter_count(model.config)) {
    throw std::runtime_error("checkpoint: parameter count does not match its config");
  }
  return model;
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  return load_checkpoint(in);
}

}  // namespace lamkit
