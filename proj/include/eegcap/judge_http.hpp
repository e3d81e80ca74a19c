#pragma once

#include <cstdlib>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "eegcap/errors.hpp"
#include "eegcap/eval.hpp"

namespace eegcap {

// Judge over HTTP: POSTs {rubric, reference_caption, generated_text, ...} as
// JSON and expects a plain-text or JSON {"reply": ...} body containing
// "fluency: <n>" and "adequacy: <n>". The API key comes from an environment
// variable, never from config files.
class HttpJudgeClient : public JudgeClient {
 public:
  HttpJudgeClient(std::string host, std::string path, std::string api_key_env = "EEGCAP_JUDGE_API_KEY")
      : host_(std::move(host)), path_(std::move(path)), api_key_env_(std::move(api_key_env)) {}

  std::string rate(const GenerationRecord& record, const std::string& rubric) override {
    httplib::Client client(host_);
    client.set_connection_timeout(10);
    client.set_read_timeout(30);
    httplib::Headers headers;
    if (const char* key = std::getenv(api_key_env_.c_str()))
      headers.emplace("Authorization", std::string("Bearer ") + key);
    nlohmann::ordered_json body;
    body["rubric"] = rubric;
    body["reference_caption"] = record.reference_caption;
    body["generated_text"] = record.generated_text;
    body["reference_object"] = record.reference_object;
    body["predicted_object"] = record.predicted_object;
    auto res = client.Post(path_, headers, body.dump(), "application/json");
    if (!res || res->status != 200)
      raise(ErrorCode::JudgeUnavailable,
            "judge endpoint " + host_ + path_ + " unreachable or non-200");
    auto j = nlohmann::json::parse(res->body, nullptr, false);
    if (!j.is_discarded() && j.contains("reply")) return j["reply"].get<std::string>();
    return res->body;
  }

 private:
  std::string host_;
  std::string path_;
  std::string api_key_env_;
};

}  // namespace eegcap
