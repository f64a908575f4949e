#include "dsex/external_command.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cctype>
#include <cerrno>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstring>
#include <thread>

#include <json.hpp>

extern char** environ;

namespace dsex {

std::string format_number(double v) {
  char buf[32];
  if (v == 0.0 && std::signbit(v)) return "-0.0";
  if (std::isfinite(v) && v == std::trunc(v) && std::fabs(v) < 9007199254740992.0) {
    auto res = std::to_chars(buf, buf + sizeof buf, static_cast<long long>(v));
    return std::string(buf, res.ptr);
  }
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string env_name(std::string_view param) {
  std::string out = "DSEX_";
  for (char c : param) out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

namespace {

Result<std::string> substitute(const std::string& tmpl, const Schema& schema, const Point& point) {
  PointScope scope(schema, point);
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      auto close = tmpl.find('}', i + 1);
      if (close != std::string::npos) {
        std::string_view name(tmpl.data() + i + 1, close - i - 1);
        if (is_identifier(name)) {
          auto v = scope.lookup(name);
          if (!v) return EvalError{EvalErrorKind::NameNotFound, std::string(name), point.coords, 0};
          out += format_number(*v);
          i = close + 1;
          continue;
        }
      }
    }
    out += tmpl[i++];
  }
  return out;
}

void drain(int fd, std::string& sink, bool& open) {
  char buf[4096];
  ssize_t n = ::read(fd, buf, sizeof buf);
  if (n > 0) sink.append(buf, static_cast<std::size_t>(n));
  else if (n == 0 || (errno != EINTR && errno != EAGAIN)) open = false;
}

}  // namespace

ProcessResult run_process(const std::vector<std::string>& argv, const std::vector<std::string>& extra_env,
                          double timeout_s) {
  ProcessResult result;
  int out_pipe[2], err_pipe[2];
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    result.spawn_failed = true;
    return result;
  }
  if (::pipe2(err_pipe, O_CLOEXEC) != 0) {
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    result.spawn_failed = true;
    return result;
  }

  std::vector<char*> args;
  for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);

  std::vector<std::string> env_storage;
  for (char** e = environ; e && *e; ++e) env_storage.emplace_back(*e);
  env_storage.insert(env_storage.end(), extra_env.begin(), extra_env.end());
  std::vector<char*> envp;
  for (auto& e : env_storage) envp.push_back(e.data());
  envp.push_back(nullptr);

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);
  posix_spawn_file_actions_adddup2(&actions, err_pipe[1], STDERR_FILENO);
  posix_spawnattr_t attr;
  posix_spawnattr_init(&attr);
  posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP);
  posix_spawnattr_setpgroup(&attr, 0);

  pid_t pid = -1;
  int rc = argv.empty() ? ENOENT : posix_spawnp(&pid, args[0], &actions, &attr, args.data(), envp.data());
  posix_spawn_file_actions_destroy(&actions);
  posix_spawnattr_destroy(&attr);
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);
  if (rc != 0) {
    ::close(out_pipe[0]);
    ::close(err_pipe[0]);
    result.spawn_failed = true;
    result.exit_code = 127;
    result.err = std::strerror(rc);
    return result;
  }

  using clock = std::chrono::steady_clock;
  const auto deadline = clock::now() + std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(timeout_s));
  bool out_open = true, err_open = true;
  while (out_open || err_open) {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now()).count();
    if (left <= 0) {
      result.timed_out = true;
      break;
    }
    pollfd fds[2] = {{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}};
    int n = ::poll(fds, 2, static_cast<int>(std::min<long long>(left, 100)));
    if (n < 0 && errno != EINTR) break;
    if (out_open && (fds[0].revents & (POLLIN | POLLHUP | POLLERR))) drain(out_pipe[0], result.out, out_open);
    if (err_open && (fds[1].revents & (POLLIN | POLLHUP | POLLERR))) drain(err_pipe[0], result.err, err_open);
  }

  int status = 0;
  while (!result.timed_out) {
    pid_t w = ::waitpid(pid, &status, WNOHANG);
    if (w == pid) break;
    if (w < 0 && errno != EINTR) break;
    if (clock::now() >= deadline) {
      result.timed_out = true;
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  if (result.timed_out) {
    ::kill(-pid, SIGKILL);
    ::waitpid(pid, &status, 0);
  } else if (WIFEXITED(status)) {
    result.exit_code = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    result.exit_code = 128 + WTERMSIG(status);
  }
  ::close(out_pipe[0]);
  ::close(err_pipe[0]);
  return result;
}

Result<MetricValues> parse_metric_object(const std::string& text, const std::vector<std::string>& produces) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    return EvalError{EvalErrorKind::ParseFailure, std::string("malformed tool output: ") + e.what(), {}, 0};
  }
  if (!doc.is_object()) return EvalError{EvalErrorKind::ParseFailure, "tool output is not a JSON object", {}, 0};
  MetricValues out;
  for (const auto& name : produces) {
    auto it = doc.find(name);
    if (it == doc.end()) return EvalError{EvalErrorKind::ParseFailure, "tool output lacks '" + name + "'", {}, 0};
    if (!it->is_number()) return EvalError{EvalErrorKind::ParseFailure, "'" + name + "' is not a number", {}, 0};
    out.push_back(it->get<double>());
  }
  return out;
}

ExternalCommandEvaluator::ExternalCommandEvaluator(CommandSpec spec)
    : Evaluator(spec.name, spec.produces, spec.nondeterministic), spec_(std::move(spec)) {
  if (spec_.argv.empty()) throw Error(ErrorKind::ConfigError, "command '" + spec_.name + "' has an empty argv");
  if (!(spec_.timeout_s > 0)) throw Error(ErrorKind::ConfigError, "command '" + spec_.name + "' needs a positive timeout");
}

Result<std::vector<std::string>> ExternalCommandEvaluator::render_argv(const Schema& schema, const Point& point) const {
  std::vector<std::string> argv;
  for (const auto& a : spec_.argv) {
    auto s = substitute(a, schema, point);
    if (!s) return s.error();
    argv.push_back(std::move(s.value()));
  }
  return argv;
}

Result<std::vector<std::string>> ExternalCommandEvaluator::render_env(const Schema& schema, const Point& point) const {
  std::vector<std::string> env;
  for (std::size_t k = 0; k < schema.size(); ++k)
    env.push_back(env_name(schema[k].name) + "=" + std::to_string(schema[k].domain.value_at(point.coords[k])));
  for (const auto& f : point.frozen) env.push_back(env_name(f.name) + "=" + format_number(f.value));
  for (const auto& [key, tmpl] : spec_.env) {
    auto s = substitute(tmpl, schema, point);
    if (!s) return s.error();
    env.push_back(key + "=" + s.value());
  }
  return env;
}

Result<MetricValues> ExternalCommandEvaluator::evaluate(const Schema& schema, const Point& point) const {
  auto argv = render_argv(schema, point);
  if (!argv) return argv.error();
  auto env = render_env(schema, point);
  if (!env) return env.error();

  ProcessResult pr = run_process(argv.value(), env.value(), spec_.timeout_s);
  if (pr.timed_out)
    return EvalError{EvalErrorKind::Timeout, spec_.name + " exceeded " + format_number(spec_.timeout_s) + " s",
                     point.coords, 0};
  if (pr.spawn_failed || pr.exit_code != 0) {
    std::string detail = spec_.name + " failed";
    if (!pr.err.empty()) detail += ": " + pr.err.substr(0, 200);
    return EvalError{EvalErrorKind::ToolFailure, detail, point.coords, pr.exit_code};
  }
  auto parsed = parse_metric_object(pr.out, produces());
  if (!parsed) {
    EvalError e = parsed.error();
    e.coords = point.coords;
    return e;
  }
  return parsed;
}

EvaluatorPtr external_command(CommandSpec spec) { return std::make_shared<ExternalCommandEvaluator>(std::move(spec)); }

}  // namespace dsex
