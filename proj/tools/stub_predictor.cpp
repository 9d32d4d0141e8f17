// Stand-in QP predictor speaking the NDJSON protocol on stdin/stdout.
//
//   rtqc-stub-predictor --fixed-qp 26
//   rtqc-stub-predictor --tables DIR      answers with the oracle QP looked up by chunk hash
//   rtqc-stub-predictor --delay-ms 50     sleeps before every reply (timeout tests)

#include <chrono>
#include <iostream>
#include <map>
#include <thread>

#include <CLI11.hpp>

#include "rtqc/controllers.hpp"
#include "rtqc/dataset_builder.hpp"
#include "rtqc/predictor_bridge.hpp"

using namespace rtqc;

int main(int argc, char** argv) {
  CLI::App app{"stub QP predictor"};
  int fixed_qp = 26;
  std::string tables_dir;
  int delay_ms = 0;
  bool garbage = false;
  app.add_option("--fixed-qp", fixed_qp)->check(CLI::Range(kMinQp, kMaxQp));
  app.add_option("--tables", tables_dir)->check(CLI::ExistingDirectory);
  app.add_option("--delay-ms", delay_ms);
  app.add_flag("--garbage", garbage, "reply with malformed lines");
  CLI11_PARSE(app, argc, argv);

  std::map<std::string, RdTable> by_hash;
  std::string model = "stub-fixed-" + std::to_string(fixed_qp);
  if (!tables_dir.empty()) {
    for (auto& t : load_rd_tables(tables_dir)) {
      by_hash.insert_or_assign(t.content_hash, std::move(t));
    }
    model = "stub-oracle";
  }

  std::ios::sync_with_stdio(false);
  std::string line;
  while (std::getline(std::cin, line)) {
    if (delay_ms > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
    }
    if (garbage) {
      std::cout << "not json" << std::endl;
      continue;
    }
    const auto reply = handle_request_line(line, [&](const PredictRequest& req) {
      int qp = fixed_qp;
      if (!tables_dir.empty()) {
        const auto it = by_hash.find(file_content_hash(req.chunk_path));
        if (it == by_hash.end()) {
          throw MissingTableError("no table for " + req.chunk_path);
        }
        qp = oracle_select(it->second, req.lambda_db).qp_final;
      }
      return PredictResponse{req.id, qp, model};
    });
    std::cout << reply << std::endl;
  }
  return 0;
}
