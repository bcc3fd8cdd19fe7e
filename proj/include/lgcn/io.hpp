#pragma once

// File formats:
//   features.csv   N rows x M numeric columns, optional header row
//   labels.csv     node_id,class   (ids 0..N-1, each exactly once; optional header)
//   checkpoint     JSON: {"format": "lgcn-checkpoint", "version": 1, "variant", "feature_dim",
//                         "parameters": [{"name", "rows", "cols", "data" (row-major)}]}
//   runs.csv       variant,budget,gamma,repeat,fold,auc,acc,sens,spec
//   roc.csv        fpr,tpr
// Doubles are written in shortest round-trip form, so re-reading is bit-exact.

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "lgcn/experiment.hpp"
#include "lgcn/metrics.hpp"
#include "lgcn/model.hpp"

namespace lgcn::io {

inline constexpr std::string_view kCheckpointFormat = "lgcn-checkpoint";
inline constexpr int kCheckpointVersion = 1;

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(out);
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  return lines;
}

/// True when no cell of the row parses as a number.
inline bool looks_like_header(const std::vector<std::string>& cells) {
  double tmp = 0.0;
  for (const auto& c : cells) {
    if (parse_double(c, tmp)) return false;
  }
  return true;
}

inline Matrix read_features_csv(const std::string& path) {
  const auto lines = read_lines(path);
  std::size_t first = 0;
  if (!lines.empty() && looks_like_header(split_csv_line(lines[0]))) first = 1;
  if (lines.size() <= first) throw ValidationError(path + ": no data rows");
  const auto n_cols = split_csv_line(lines[first]).size();
  Matrix f(static_cast<Eigen::Index>(lines.size() - first), static_cast<Eigen::Index>(n_cols));
  for (std::size_t r = first; r < lines.size(); ++r) {
    const auto cells = split_csv_line(lines[r]);
    const auto row = r - first;
    if (cells.size() != n_cols) {
      throw ValidationError(path + ": row " + std::to_string(row) + " (line " + std::to_string(r + 1) + ") has " +
                            std::to_string(cells.size()) + " columns, expected " + std::to_string(n_cols));
    }
    for (std::size_t c = 0; c < n_cols; ++c) {
      double v = 0.0;
      if (!parse_double(cells[c], v)) {
        throw ValidationError(path + ": row " + std::to_string(row) + " (line " + std::to_string(r + 1) +
                              "), column " + std::to_string(c) + ": '" + cells[c] + "' is not a finite number");
      }
      f(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c)) = v;
    }
  }
  return f;
}

inline std::vector<int> read_labels_csv(const std::string& path) {
  const auto lines = read_lines(path);
  std::size_t first = 0;
  if (!lines.empty() && looks_like_header(split_csv_line(lines[0]))) first = 1;
  const std::size_t n = lines.size() - first;
  if (n == 0) throw ValidationError(path + ": no data rows");
  std::vector<int> labels(n, -1);
  for (std::size_t r = first; r < lines.size(); ++r) {
    const auto cells = split_csv_line(lines[r]);
    const std::string where = path + ": row " + std::to_string(r - first) + " (line " + std::to_string(r + 1) + ")";
    if (cells.size() != 2) throw ValidationError(where + ": expected 'node_id,class'");
    long id = -1;
    int cls = -1;
    auto id_res = std::from_chars(cells[0].data(), cells[0].data() + cells[0].size(), id);
    if (id_res.ec != std::errc() || id_res.ptr != cells[0].data() + cells[0].size()) {
      throw ValidationError(where + ", column 0: '" + cells[0] + "' is not an integer node id");
    }
    auto cls_res = std::from_chars(cells[1].data(), cells[1].data() + cells[1].size(), cls);
    if (cls_res.ec != std::errc() || cls_res.ptr != cells[1].data() + cells[1].size() || (cls != 0 && cls != 1)) {
      throw ValidationError(where + ", column 1: '" + cells[1] + "' is not a class in {0,1}");
    }
    if (id < 0 || static_cast<std::size_t>(id) >= n) {
      throw ValidationError(where + ", column 0: node id " + std::to_string(id) + " outside 0.." + std::to_string(n - 1));
    }
    if (labels[static_cast<std::size_t>(id)] != -1) {
      throw ValidationError(where + ", column 0: duplicate node id " + std::to_string(id));
    }
    labels[static_cast<std::size_t>(id)] = cls;
  }
  return labels;
}

inline Dataset read_dataset(const std::string& features_path, const std::string& labels_path) {
  Dataset d{read_features_csv(features_path), read_labels_csv(labels_path)};
  if (static_cast<std::size_t>(d.features.rows()) != d.labels.size()) {
    throw ValidationError("dataset: " + std::to_string(d.features.rows()) + " feature rows but " +
                          std::to_string(d.labels.size()) + " labels");
  }
  return d;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  return out;
}

inline void write_features_csv(const std::string& path, const Matrix& f) {
  auto out = open_out(path);
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    for (Eigen::Index j = 0; j < f.cols(); ++j) {
      if (j) out << ',';
      out << format_double(f(i, j));
    }
    out << '\n';
  }
}

inline void write_labels_csv(const std::string& path, const std::vector<int>& labels) {
  auto out = open_out(path);
  out << "node_id,class\n";
  for (std::size_t i = 0; i < labels.size(); ++i) out << i << ',' << labels[i] << '\n';
}

inline void write_text(const std::string& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
}

inline void write_json(const std::string& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

inline void write_loss_csv(const std::string& path, const std::vector<double>& losses) {
  auto out = open_out(path);
  out << "epoch,loss\n";
  for (std::size_t e = 0; e < losses.size(); ++e) out << e << ',' << format_double(losses[e]) << '\n';
}

inline void write_roc_csv(const std::string& path, const std::vector<RocPoint>& roc) {
  auto out = open_out(path);
  out << "fpr,tpr\n";
  for (const auto& p : roc) out << format_double(p.fpr) << ',' << format_double(p.tpr) << '\n';
}

inline std::string runs_csv(const SweepReport& report) {
  std::ostringstream out;
  out << "variant,budget,gamma,repeat,fold,auc,acc,sens,spec\n";
  for (const auto& r : report.runs) {
    out << variant_name(r.variant) << ',' << r.budget << ',' << format_double(r.gamma) << ',' << r.repeat << ','
        << r.fold << ',' << format_double(r.auc) << ',' << format_double(r.accuracy) << ','
        << format_double(r.sensitivity) << ',' << format_double(r.specificity) << '\n';
  }
  return out.str();
}

// ---- checkpoints ----

inline nlohmann::json checkpoint_json(const ModelParams& params) {
  nlohmann::json tensors = nlohmann::json::array();
  const auto names = params.names();
  const auto ts = params.tensors();
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const Matrix& m = *ts[k];
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
    }
    tensors.push_back({{"name", names[k]}, {"rows", m.rows()}, {"cols", m.cols()}, {"data", data}});
  }
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"variant", variant_name(params.variant)},
          {"feature_dim", params.feature_dim},
          {"parameters", tensors}};
}

inline ModelParams params_from_checkpoint(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != kCheckpointFormat) {
    throw ValidationError("checkpoint: missing format tag '" + std::string(kCheckpointFormat) + "'");
  }
  if (j.value("version", 0) != kCheckpointVersion) {
    throw ValidationError("checkpoint: unsupported version " + j.value("version", nlohmann::json()).dump());
  }
  ModelParams p;
  p.variant = parse_variant(j.at("variant").get<std::string>());
  p.feature_dim = j.at("feature_dim").get<Eigen::Index>();
  std::vector<Matrix> mats;
  std::vector<std::string> names;
  for (const auto& t : j.at("parameters")) {
    const auto rows = t.at("rows").get<Eigen::Index>();
    const auto cols = t.at("cols").get<Eigen::Index>();
    const auto data = t.at("data").get<std::vector<double>>();
    if (rows < 1 || cols < 1 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
      throw ValidationError("checkpoint: tensor '" + t.value("name", std::string("?")) + "' shape/data mismatch");
    }
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = data[static_cast<std::size_t>(i * cols + c)];
    }
    mats.push_back(std::move(m));
    names.push_back(t.at("name").get<std::string>());
  }
  std::size_t k = 0;
  while (k < names.size() && names[k].starts_with("encoder.")) {
    if (k + 1 >= names.size()) throw ValidationError("checkpoint: encoder layer without bias");
    p.encoder.push_back(DenseLayer{mats[k], mats[k + 1]});
    k += 2;
  }
  for (; k < names.size(); ++k) p.gcn.push_back(mats[k]);
  if (p.names() != names) throw ValidationError("checkpoint: unexpected parameter names or order");
  if (p.variant == Variant::learnable && p.encoder.empty()) throw ValidationError("checkpoint: learnable model without encoder");
  if (p.gcn.empty()) throw ValidationError("checkpoint: no graph convolution weights");
  Eigen::Index width = p.feature_dim;
  for (const auto& layer : p.encoder) {
    if (layer.weight.rows() != width || layer.bias.rows() != 1 || layer.bias.cols() != layer.weight.cols()) {
      throw ValidationError("checkpoint: inconsistent encoder shapes");
    }
    width = layer.weight.cols();
  }
  for (const auto& w : p.gcn) {
    if (w.rows() != width) throw ValidationError("checkpoint: inconsistent graph convolution shapes");
    width = w.cols();
  }
  return p;
}

inline void save_checkpoint(const std::string& path, const ModelParams& params) {
  write_json(path, checkpoint_json(params));
}

inline ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint '" + path + "': " + e.what());
  }
  try {
    return params_from_checkpoint(j);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint '" + path + "': " + e.what());
  }
}

}  // namespace lgcn::io
