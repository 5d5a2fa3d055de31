#include "hoi/reports.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hoi/errors.hpp"

namespace hoi {

using nlohmann::json;

namespace {

const EvalReport& final_eval(const RunRecord& r) { return r.evals.empty() ? r.initial_eval : r.evals.back(); }

std::string num(double x) {
  if (std::isnan(x)) return "nan";
  std::ostringstream os;
  os.precision(10);
  os << x;
  return os.str();
}

std::string opt_num(const std::optional<double>& x) { return x ? num(*x) : ""; }

}  // namespace

json to_json(const LossReport& r) {
  return {{"l_box", r.l_box},   {"l_iou", r.l_iou},     {"l_cls_object", r.l_cls_object},
          {"l_cls_action", r.l_cls_action}, {"l_detector", r.l_detector}, {"l_con", r.l_con},
          {"l_cal", r.l_cal},   {"l_merge", r.l_merge}, {"l_split", r.l_split}, {"l_all", r.l_all}};
}

json to_json(const ObjectiveToggles& t) {
  return {{"hor_mask_on", t.hor_mask}, {"con_on", t.con}, {"cal_on", t.cal}, {"merge_on", t.merge},
          {"split_on", t.split}};
}

json to_json(const BiasReport& b) { return {{"input", to_json(b.input)}, {"output", to_json(b.output)}}; }

json to_json(const RunRecord& r) {
  json losses = json::array(), evals = json::array();
  for (const auto& l : r.losses) losses.push_back(to_json(l));
  for (const auto& e : r.evals) evals.push_back(to_json(e));
  return {{"config_hash", r.config_hash},
          {"seed", r.seed},
          {"toggles", to_json(r.toggles)},
          {"epochs", r.losses.size()},
          {"lr", r.lr},
          {"initial_eval", to_json(r.initial_eval)},
          {"losses", losses},
          {"evals", evals},
          {"bias", to_json(r.bias)},
          {"checkpoint", r.checkpoint}};
}

std::string curves_csv(const RunRecord& r) {
  std::ostringstream os;
  os << "epoch,lr,l_box,l_iou,l_cls_object,l_cls_action,l_detector,l_con,l_cal,l_merge,l_split,l_all,"
        "map_full,map_rare,map_nonrare,map_known_object\n";
  for (std::size_t e = 0; e < r.losses.size(); ++e) {
    const auto& l = r.losses[e];
    const auto& v = r.evals.at(e);
    os << e + 1 << ',' << num(r.lr.at(e)) << ',' << num(l.l_box) << ',' << num(l.l_iou) << ',' << num(l.l_cls_object)
       << ',' << num(l.l_cls_action) << ',' << num(l.l_detector) << ',' << num(l.l_con) << ',' << num(l.l_cal) << ','
       << num(l.l_merge) << ',' << num(l.l_split) << ',' << num(l.l_all) << ',' << num(v.map_full) << ','
       << num(v.map_rare) << ',' << num(v.map_nonrare) << ',' << num(v.map_known_object) << '\n';
  }
  return os.str();
}

std::string ablation_csv(const std::vector<AblationRun>& runs) {
  std::ostringstream os;
  os << "row,seed,hor_mask_on,con_on,cal_on,merge_on,split_on,map_full,map_rare,map_nonrare,map_known_object,"
        "err_with_siblings,err_without_siblings\n";
  for (const auto& run : runs) {
    const auto& t = run.record.toggles;
    const auto& e = final_eval(run.record);
    const auto& ib = run.record.bias.input;
    os << run.row << ',' << run.seed << ',' << t.hor_mask << ',' << t.con << ',' << t.cal << ',' << t.merge << ','
       << t.split << ',' << num(e.map_full) << ',' << num(e.map_rare) << ',' << num(e.map_nonrare) << ','
       << num(e.map_known_object) << ',' << opt_num(ib.with_siblings) << ',' << opt_num(ib.without_siblings) << '\n';
  }
  return os.str();
}

std::vector<AblationSummaryRow> summarize(const std::vector<AblationRun>& runs) {
  std::vector<AblationSummaryRow> rows;
  for (const auto& run : runs) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const auto& r) { return r.row == run.row; });
    if (it == rows.end()) {
      rows.push_back({run.row});
      it = rows.end() - 1;
    }
    const auto& e = final_eval(run.record);
    ++it->runs;
    it->map_full += e.map_full;
    it->map_rare += e.map_rare;
    it->map_nonrare += e.map_nonrare;
    it->map_known_object += e.map_known_object;
  }
  for (auto& r : rows) {
    const double n = double(r.runs);
    r.map_full /= n;
    r.map_rare /= n;
    r.map_nonrare /= n;
    r.map_known_object /= n;
  }
  return rows;
}

std::string summary_csv(const std::vector<AblationSummaryRow>& rows) {
  std::ostringstream os;
  os << "row,runs,map_full,map_rare,map_nonrare,map_known_object\n";
  for (const auto& r : rows)
    os << r.row << ',' << r.runs << ',' << num(r.map_full) << ',' << num(r.map_rare) << ',' << num(r.map_nonrare)
       << ',' << num(r.map_known_object) << '\n';
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

}  // namespace hoi
