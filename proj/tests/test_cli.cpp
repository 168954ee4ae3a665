#include "doctest.h"
#include "support.hpp"

#include "cli.hpp"
#include "metagadget/devices.hpp"
#include "metagadget/gateway.hpp"

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

const char* const kCli = METAGADGET_CLI_PATH;

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("mg-cli-" + std::to_string(::getpid()));
    fs::create_directories(dir);
    return dir / name;
}

/// A child process with stdout/stderr redirected to files.
class Child {
public:
    explicit Child(std::vector<std::string> args, std::vector<std::string> env = {}) {
        static int counter = 0;
        const auto tag = std::to_string(counter++);
        out_ = scratch("out" + tag);
        err_ = scratch("err" + tag);
        pid_ = ::fork();
        if (pid_ == 0) {
            int o = ::open(out_.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
            int e = ::open(err_.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
            ::dup2(o, 1);
            ::dup2(e, 2);
            for (const auto& kv : env) ::putenv(const_cast<char*>(kv.c_str()));
            std::vector<char*> argv{const_cast<char*>(kCli)};
            for (auto& a : args) argv.push_back(a.data());
            argv.push_back(nullptr);
            ::execv(kCli, argv.data());
            ::_exit(127);
        }
    }
    Child(const Child&) = delete;
    ~Child() {
        if (pid_ > 0 && !reaped_) {
            ::kill(pid_, SIGKILL);
            ::waitpid(pid_, nullptr, 0);
        }
    }

    /// Waits for the first complete stdout line.
    std::string first_line(std::chrono::milliseconds limit = std::chrono::seconds(10)) {
        const auto deadline = std::chrono::steady_clock::now() + limit;
        while (std::chrono::steady_clock::now() < deadline) {
            auto text = slurp(out_);
            if (auto nl = text.find('\n'); nl != std::string::npos) return text.substr(0, nl);
            if (exited_early()) break;
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
        }
        return {};
    }

    void signal(int sig) { ::kill(pid_, sig); }

    int wait(std::chrono::milliseconds limit = std::chrono::seconds(60)) {
        const auto deadline = std::chrono::steady_clock::now() + limit;
        while (!reaped_ && std::chrono::steady_clock::now() < deadline) {
            if (exited_early()) break;
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
        }
        if (!reaped_) {
            ::kill(pid_, SIGKILL);
            ::waitpid(pid_, &status_, 0);
            reaped_ = true;
            return -1;
        }
        return WIFEXITED(status_) ? WEXITSTATUS(status_) : -1;
    }

    std::string out() const { return slurp(out_); }
    std::string err() const { return slurp(err_); }

private:
    bool exited_early() {
        if (reaped_) return true;
        if (::waitpid(pid_, &status_, WNOHANG) == pid_) reaped_ = true;
        return reaped_;
    }

    pid_t pid_ = -1;
    int status_ = 0;
    bool reaped_ = false;
    fs::path out_, err_;
};

std::uint16_t port_of(const std::string& url) {
    std::smatch m;
    std::regex re(R"(^http://127\.0\.0\.1:(\d+))");
    if (!std::regex_search(url, m, re)) return 0;
    return static_cast<std::uint16_t>(std::stoi(m[1]));
}

struct LiveGateway {
    metagadget::DeviceRegistry devices = metagadget::DeviceRegistry::demo_defaults();
    std::optional<metagadget::ServerHandle> server;
    LiveGateway() {
        metagadget::HandlerRegistration reg;
        devices.bind_routes(reg);
        server.emplace(metagadget::run({}, std::move(reg)));
    }
};

} // namespace

TEST_CASE("serve prints its URL first, serves through it and exits 0 on SIGINT") {
    Child serve({"serve", "--port", "0", "--seed", "12"});
    const auto url = serve.first_line();
    REQUIRE_MESSAGE(std::regex_match(url, std::regex(R"(http://127\.0\.0\.1:\d+/[0-9A-Za-z]{16})")), url);
    const auto port = port_of(url);
    const auto token = url.substr(url.rfind('/'));

    auto r = testsupport::post(port, token + "/fan", metagadget::encode_envelope({"on", "", "", "", "u", 0}));
    CHECK(r.status == 200);
    auto led = testsupport::post(port, "/trigger", metagadget::encode_envelope({"on", "", "", "", "u", 0}));
    CHECK(led.status == 200);
    CHECK(led.body.find("17") != std::string::npos);
    CHECK(testsupport::post(port, "/wrongtoken00000/fan", "{}").status == 404);

    serve.signal(SIGINT);
    CHECK(serve.wait() == 0);
    auto out = serve.out();
    CHECK(out.find("route=fan") != std::string::npos);
    CHECK(std::count(out.begin(), out.end(), '\n') == 4);
}

TEST_CASE("serve with jsonl logs emits one JSON object per request") {
    Child serve({"serve", "--port", "0", "--log-format", "jsonl"});
    const auto url = serve.first_line();
    const auto port = port_of(url);
    REQUIRE(port != 0);
    testsupport::post(port, "/trigger/fan", metagadget::encode_envelope({"off", "", "", "", "u", 0}));
    serve.signal(SIGTERM);
    CHECK(serve.wait() == 0);
    std::istringstream lines(serve.out());
    std::string line;
    std::getline(lines, line);
    CHECK(line == url);
    REQUIRE(std::getline(lines, line));
    auto doc = metagadget::Json::parse(line);
    CHECK(doc["route"] == "fan");
    CHECK(doc["status"] == 200);
}

TEST_CASE("serve on an occupied port exits 2") {
    LiveGateway gw;
    Child serve({"serve", "--port", std::to_string(gw.server->port())});
    CHECK(serve.wait() == 2);
    CHECK(serve.out().empty());
    CHECK(serve.err().find("error:") != std::string::npos);
}

TEST_CASE("serve in external mode without an adapter exits 2") {
    Child serve({"serve", "--port", "0"}, {"MG_TUNNEL_MODE=external"});
    CHECK(serve.wait() == 2);
}

TEST_CASE("world-run exit codes") {
    const auto fan = (testsupport::fixtures() / "fan_3users.json").string();
    {
        LiveGateway gw;
        Child run({"world-run", fan, "--gateway-url", gw.server->local_url()});
        CHECK(run.wait() == 0);
        CHECK(run.out().find("forwarded=3") != std::string::npos);
    }
    {
        Child run({"world-run", fan, "--gateway-url", "http://127.0.0.1:1/trigger", "--log-format", "jsonl"});
        CHECK(run.wait() == 1);
        auto doc = metagadget::Json::parse(run.out());
        CHECK(doc["failedCalls"] == 3);
    }
    {
        auto bad = scratch("bad.json");
        std::ofstream(bad) << "{\n  \"users\": [{\"userId\": \"a\"}],\n  \"events\": [\n"
                              "    {\"tMs\": 5, \"action\": \"Join\", \"userId\": \"a\"},\n"
                              "    {\"tMs\": 1, \"action\": \"Join\", \"userId\": \"a\"}\n  ]\n}\n";
        Child run({"world-run", bad.string(), "--gateway-url", "http://127.0.0.1:1"});
        CHECK(run.wait() == 2);
        CHECK(run.err().find(bad.string() + ":5:") != std::string::npos);
    }
    {
        Child run({"world-run", fan});
        CHECK(run.wait() == 2);
    }
}

TEST_CASE("demos pass end to end") {
    for (const char* name : {"fan", "doorbell", "presence-lamp", "piano", "smarthome"}) {
        CAPTURE(name);
        Child demo({"demo", name, "--seed", "3"});
        CHECK(demo.wait() == 0);
        CHECK(demo.out().find(std::string("demo ") + name + ": ok") != std::string::npos);
        if (std::string(name) == "piano") {
            CHECK(demo.out().find("110.00") != std::string::npos);
            CHECK(demo.out().find("1396.91") != std::string::npos);
        }
        if (std::string(name) == "fan") CHECK(demo.out().find("fan: Stopped") != std::string::npos);
    }
}

TEST_CASE("a demo whose checks fail exits 1") {
    auto dir = scratch("fixtures-broken");
    fs::create_directories(dir);
    // A fan scenario that ends on "on" contradicts the demo's expected final state.
    std::ofstream(dir / "fan_demo.json")
        << R"({"users":[{"userId":"a"}],"items":[{"itemId":"fan","kind":"Clickable","script":{"targetRoute":"/fan","payloadTemplate":"on"}}],"events":[{"tMs":0,"action":"Join","userId":"a"},{"tMs":1,"action":"Click","userId":"a","itemId":"fan"}]})";
    Child demo({"demo", "fan", "--fixtures-dir", dir.string()});
    CHECK(demo.wait() == 1);
    CHECK(demo.err().find("should end Stopped") != std::string::npos);
}

TEST_CASE("mock-smarthome serves the roster and honours --fixture") {
    {
        Child mock({"mock-smarthome", "--port", "0"});
        const auto base = mock.first_line();
        const auto port = port_of(base);
        REQUIRE(port != 0);
        httplib::Client c("127.0.0.1", port);
        auto res = c.Get("/v1.1/devices", {{"Authorization", "metagadget-mock-token"}});
        REQUIRE(res);
        CHECK(metagadget::Json::parse(res->body)["body"]["deviceList"].size() == 27);

        Child clash({"mock-smarthome", "--port", std::to_string(port)});
        CHECK(clash.wait() == 2);

        mock.signal(SIGINT);
        CHECK(mock.wait() == 0);
    }
    {
        Child mock({"mock-smarthome", "--port", "0", "--fixture",
                    (testsupport::fixtures() / "smarthome_empty.json").string()});
        const auto port = port_of(mock.first_line());
        REQUIRE(port != 0);
        httplib::Client c("127.0.0.1", port);
        auto res = c.Get("/v1.1/devices", {{"Authorization", "metagadget-mock-token"}});
        REQUIRE(res);
        CHECK(metagadget::Json::parse(res->body)["body"]["deviceList"].empty());
        mock.signal(SIGINT);
        CHECK(mock.wait() == 0);
    }
}

TEST_CASE("argument errors exit 2 and --help exits 0") {
    CHECK(Child({"--help"}).wait() == 0);
    CHECK(Child({}).wait() == 2);
    CHECK(Child({"launch"}).wait() == 2);
    CHECK(Child({"demo", "toaster"}).wait() == 2);
    CHECK(Child({"serve", "--port", "99999"}).wait() == 2);
    CHECK(Child({"serve", "--tunnel-mode", "carrier-pigeon"}).wait() == 2);
}

TEST_CASE("flags override environment which overrides defaults") {
    std::atomic<bool> stop{true};
    auto serve_url = [&](std::vector<std::string> args) {
        std::vector<char*> argv{const_cast<char*>("metagadget")};
        for (auto& a : args) argv.push_back(a.data());
        std::ostringstream out, err;
        const int code = metagadget::cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err, stop);
        REQUIRE(code == 0);
        return out.str().substr(0, out.str().find('\n'));
    };

    // Find a free port by binding and releasing one.
    std::uint16_t free_port = 0;
    {
        LiveGateway probe;
        free_port = probe.server->port();
    }
    ::setenv("MG_PORT", std::to_string(free_port).c_str(), 1);
    ::setenv("MG_SEED", "5", 1);
    const auto from_env = serve_url({"serve"});
    CHECK(port_of(from_env) == free_port);
    CHECK(from_env == serve_url({"serve"}));

    const auto from_flag = serve_url({"serve", "--port", "0", "--seed", "6"});
    CHECK(port_of(from_flag) != free_port);
    CHECK(from_flag.substr(from_flag.rfind('/')) != from_env.substr(from_env.rfind('/')));

    ::unsetenv("MG_PORT");
    ::unsetenv("MG_SEED");
}
