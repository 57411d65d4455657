#include "fairdi/metrics_io.hpp"

#include <cctype>
#include <cmath>
#include <sstream>

#include "fairdi/csv.hpp"
#include "fairdi/error.hpp"

namespace fairdi {
namespace {

int parse_label(const std::string& field, const std::string& source, std::size_t line) {
  const long long v = parse_int_field(field, source, line);
  if (v != 0 && v != 1) {
    throw Error(ErrorCode::parse_error, source + ":" + std::to_string(line) + ": label must be 0 or 1");
  }
  return static_cast<int>(v);
}

int parse_attribute(const std::string& field, const std::string& source, std::size_t line) {
  const long long v = parse_int_field(field, source, line);
  if (v < 0) throw Error(ErrorCode::parse_error, source + ":" + std::to_string(line) + ": negative attribute");
  return static_cast<int>(v);
}

// Reads the next whitespace-separated PGM header token, skipping comments.
std::string pgm_token(const std::string& data, std::size_t& pos) {
  while (pos < data.size()) {
    if (data[pos] == '#') {
      while (pos < data.size() && data[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(data[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos])) && data[pos] != '#') ++pos;
  return data.substr(start, pos - start);
}

std::size_t pgm_number(const std::string& data, std::size_t& pos, const std::string& source) {
  const std::string tok = pgm_token(data, pos);
  if (tok.empty()) throw Error(ErrorCode::parse_error, source + ": truncated PGM header");
  return static_cast<std::size_t>(parse_int_field(tok, source, 1));
}

Mask load_pgm(const std::string& data, const std::string& source) {
  std::size_t pos = 0;
  const std::string magic = pgm_token(data, pos);
  Mask m;
  m.width = pgm_number(data, pos, source);
  m.height = pgm_number(data, pos, source);
  const std::size_t maxval = pgm_number(data, pos, source);
  if (m.width == 0 || m.height == 0 || maxval == 0 || maxval > 65535) {
    throw Error(ErrorCode::parse_error, source + ": bad PGM dimensions");
  }
  const std::size_t n = m.width * m.height;
  m.pixels.resize(n);
  if (magic == "P2") {
    for (std::size_t i = 0; i < n; ++i) {
      const std::string tok = pgm_token(data, pos);
      if (tok.empty()) throw Error(ErrorCode::parse_error, source + ": truncated PGM pixel data");
      m.pixels[i] = parse_int_field(tok, source, 1) != 0;
    }
  } else {
    ++pos;  // single whitespace after maxval
    const std::size_t bpp = maxval < 256 ? 1 : 2;
    if (data.size() < pos + n * bpp) throw Error(ErrorCode::parse_error, source + ": truncated PGM pixel data");
    for (std::size_t i = 0; i < n; ++i) {
      bool on = false;
      for (std::size_t b = 0; b < bpp; ++b) on = on || data[pos + i * bpp + b] != 0;
      m.pixels[i] = on;
    }
  }
  return m;
}

Mask load_rle(const std::string& data, const std::string& source) {
  std::istringstream in(data);
  std::string line;
  std::size_t line_no = 0;
  Mask m;
  bool have_shape = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_csv_line(line);
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() != 2) {
      throw Error(ErrorCode::parse_error, source + ":" + std::to_string(line_no) + ": expected two fields");
    }
    const long long a = parse_int_field(fields[0], source, line_no);
    const long long b = parse_int_field(fields[1], source, line_no);
    if (a < 0 || b < 0) throw Error(ErrorCode::parse_error, source + ":" + std::to_string(line_no) + ": negative value");
    if (!have_shape) {
      m.height = static_cast<std::size_t>(a);
      m.width = static_cast<std::size_t>(b);
      m.pixels.assign(m.height * m.width, 0);
      have_shape = true;
      continue;
    }
    const auto start = static_cast<std::size_t>(a);
    const auto len = static_cast<std::size_t>(b);
    if (start + len > m.pixels.size()) {
      throw Error(ErrorCode::parse_error, source + ":" + std::to_string(line_no) + ": run outside mask");
    }
    for (std::size_t i = start; i < start + len; ++i) m.pixels[i] = 1;
  }
  if (!have_shape) throw Error(ErrorCode::parse_error, source + ": empty mask file");
  return m;
}

std::string task_name(Task t) { return t == Task::classification ? "classification" : "segmentation"; }

}  // namespace

std::vector<ClassificationRecord> load_classification_predictions(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const std::string src = path.string();
  const std::size_t c_score = t.column("score", src);
  const std::size_t c_label = t.column("label", src);
  const std::size_t c_attr = t.column("attribute", src);
  const bool has_id = t.has_column("id");
  const std::size_t c_id = has_id ? t.column("id", src) : 0;
  std::vector<ClassificationRecord> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::size_t ln = t.line_numbers[r];
    ClassificationRecord rec;
    rec.id = has_id ? row[c_id] : std::to_string(r);
    rec.score = parse_double_field(row[c_score], src, ln);
    rec.label = parse_label(row[c_label], src, ln);
    rec.attribute = parse_attribute(row[c_attr], src, ln);
    out.push_back(std::move(rec));
  }
  if (out.empty()) throw Error(ErrorCode::invalid_input, src + ": no predictions");
  return out;
}

void save_classification_predictions(const std::vector<ClassificationRecord>& recs, const std::filesystem::path& path) {
  std::string s = "id,score,label,attribute\n";
  for (const auto& r : recs) {
    s += r.id + "," + format_double(r.score) + "," + std::to_string(r.label) + "," + std::to_string(r.attribute) + "\n";
  }
  write_text_file(path, s);
}

std::vector<GroupValues> load_group_values(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const std::string src = path.string();
  const std::size_t c_task = t.column("task", src);
  const std::size_t c_overall = t.column("overall", src);
  const std::size_t c_group = t.column("group", src);
  const std::size_t c_value = t.column("value", src);
  const bool has_metric = t.has_column("metric");
  const std::size_t c_metric = has_metric ? t.column("metric", src) : 0;
  std::vector<GroupValues> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::size_t ln = t.line_numbers[r];
    const double overall = parse_double_field(row[c_overall], src, ln);
    GroupValues* gv = nullptr;
    for (auto& existing : out) {
      if (existing.task == row[c_task]) gv = &existing;
    }
    const std::string metric = has_metric ? row[c_metric] : "auc";
    if (metric != "auc" && metric != "dice" && metric != "iou") {
      throw Error(ErrorCode::parse_error, src + ":" + std::to_string(ln) + ": unknown metric '" + metric + "'");
    }
    if (gv == nullptr) {
      out.push_back(GroupValues{row[c_task], metric, overall, {}});
      gv = &out.back();
    } else if (gv->overall != overall || gv->metric != metric) {
      throw Error(ErrorCode::parse_error, src + ":" + std::to_string(ln) + ": inconsistent overall or metric for task '" +
                                              row[c_task] + "'");
    }
    const int g = parse_attribute(row[c_group], src, ln);
    if (!gv->per_group.emplace(g, parse_double_field(row[c_value], src, ln)).second) {
      throw Error(ErrorCode::parse_error, src + ":" + std::to_string(ln) + ": duplicate group " + std::to_string(g));
    }
  }
  if (out.empty()) throw Error(ErrorCode::invalid_input, src + ": no rows");
  return out;
}

Mask load_mask(const std::filesystem::path& path) {
  const std::string data = read_text_file(path);
  const std::string src = path.string();
  if (data.size() >= 2 && data[0] == 'P' && (data[1] == '2' || data[1] == '5')) return load_pgm(data, src);
  return load_rle(data, src);
}

void save_mask_pgm(const Mask& mask, const std::filesystem::path& path) {
  std::string s = "P5\n" + std::to_string(mask.width) + " " + std::to_string(mask.height) + "\n255\n";
  for (const auto p : mask.pixels) s.push_back(static_cast<char>(p ? 255 : 0));
  write_text_file(path, s);
}

void save_mask_rle(const Mask& mask, const std::filesystem::path& path) {
  std::string s = std::to_string(mask.height) + "," + std::to_string(mask.width) + "\n";
  std::size_t i = 0;
  while (i < mask.pixels.size()) {
    if (!mask.pixels[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < mask.pixels.size() && mask.pixels[j]) ++j;
    s += std::to_string(i) + "," + std::to_string(j - i) + "\n";
    i = j;
  }
  write_text_file(path, s);
}

std::vector<SegmentationRecord> load_segmentation_index(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const std::string src = path.string();
  const std::size_t c_id = t.column("id", src);
  const std::size_t c_pred = t.column("pred_path", src);
  const std::size_t c_truth = t.column("truth_path", src);
  const std::size_t c_attr = t.column("attribute", src);
  const auto base = path.parent_path();
  std::vector<SegmentationRecord> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    SegmentationRecord rec;
    rec.id = row[c_id];
    rec.attribute = parse_attribute(row[c_attr], src, t.line_numbers[r]);
    auto resolve = [&](const std::string& p) {
      const std::filesystem::path fp(p);
      return fp.is_absolute() ? fp : base / fp;
    };
    rec.pred = load_mask(resolve(row[c_pred]));
    rec.truth = load_mask(resolve(row[c_truth]));
    if (rec.pred.height != rec.truth.height || rec.pred.width != rec.truth.width) {
      throw Error(ErrorCode::shape_error, src + ":" + std::to_string(t.line_numbers[r]) + ": mask shapes differ");
    }
    out.push_back(std::move(rec));
  }
  if (out.empty()) throw Error(ErrorCode::invalid_input, src + ": no images");
  return out;
}

nlohmann::json block_to_json(const MetricBlock& b) {
  nlohmann::json j;
  j["metric"] = b.metric;
  j["overall"] = b.overall;
  j["worst_case"] = b.worst_case;
  j["gap"] = b.gap;
  j["equity_scaled"] = b.equity_scaled;
  nlohmann::json groups = nlohmann::json::object();
  for (const auto& [g, v] : b.per_group) groups[std::to_string(g)] = v;
  j["per_group"] = groups;
  if (b.mean_psd) j["mean_psd"] = *b.mean_psd;
  if (b.max_psd) j["max_psd"] = *b.max_psd;
  return j;
}

nlohmann::json report_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["task"] = task_name(r.task);
  j["metrics"] = nlohmann::json::array();
  for (const auto& b : r.blocks) j["metrics"].push_back(block_to_json(b));
  return j;
}

std::string report_to_csv(const MetricsReport& r) {
  std::ostringstream out;
  std::map<int, bool> groups;
  for (const auto& b : r.blocks) {
    for (const auto& [g, v] : b.per_group) groups[g] = true;
  }
  out << "metric,overall,worst_case,equity_scaled,gap,mean_psd,max_psd";
  for (const auto& [g, unused] : groups) out << ",group_" << g;
  out << "\n";
  for (const auto& b : r.blocks) {
    out << b.metric << "," << format_double(b.overall) << "," << format_double(b.worst_case) << ","
        << format_double(b.equity_scaled) << "," << format_double(b.gap) << ","
        << (b.mean_psd ? format_double(*b.mean_psd) : "") << "," << (b.max_psd ? format_double(*b.max_psd) : "");
    for (const auto& [g, unused] : groups) {
      out << ",";
      const auto it = b.per_group.find(g);
      if (it != b.per_group.end()) out << format_double(it->second);
    }
    out << "\n";
  }
  return out.str();
}

std::string roc_points_csv(const std::vector<ClassificationRecord>& recs) {
  std::map<std::string, std::pair<std::vector<double>, std::vector<int>>> sets;
  for (const auto& r : recs) {
    for (const std::string& key : {std::string("all"), std::to_string(r.attribute)}) {
      sets[key].first.push_back(r.score);
      sets[key].second.push_back(r.label);
    }
  }
  std::string s = "group,threshold,fpr,tpr\n";
  for (const auto& [key, data] : sets) {
    std::vector<RocPoint> pts;
    try {
      pts = roc_curve(data.first, data.second);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::undefined_metric) throw;
      continue;
    }
    for (const auto& p : pts) {
      s += key + "," + (std::isinf(p.threshold) ? std::string("inf") : format_double(p.threshold)) + "," +
           format_double(p.fpr) + "," + format_double(p.tpr) + "\n";
    }
  }
  return s;
}

}  // namespace fairdi
