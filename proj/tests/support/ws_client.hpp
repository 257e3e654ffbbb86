#pragma once

// Blocking WebSocket client for driving the session host from tests.

#include <string>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <nlohmann/json.hpp>

namespace ikk::testing {

class WsClient {
 public:
  WsClient(const std::string& host, unsigned short port) : resolver_(ioc_), ws_(ioc_) {
    const auto results = resolver_.resolve(host, std::to_string(port));
    boost::asio::connect(ws_.next_layer(), results.begin(), results.end());
    ws_.handshake(host + ":" + std::to_string(port), "/");
    ws_.text(true);
  }

  ~WsClient() {
    boost::beast::error_code ec;
    ws_.close(boost::beast::websocket::close_code::normal, ec);
  }

  void send(nlohmann::json msg) {
    msg["v"] = 1;
    msg["seq"] = ++seq_;
    ws_.write(boost::asio::buffer(msg.dump()));
  }

  void send_raw(const std::string& text) { ws_.write(boost::asio::buffer(text)); }

  nlohmann::json receive() {
    boost::beast::flat_buffer buf;
    ws_.read(buf);
    return nlohmann::json::parse(boost::beast::buffers_to_string(buf.data()));
  }

  /// Next message of the given type; others are dropped.
  nlohmann::json receive(const std::string& type) {
    while (true) {
      auto m = receive();
      if (m.value("type", "") == type) return m;
    }
  }

  /// Read and return whether the server closed the connection.
  bool closed_by_peer() {
    boost::beast::flat_buffer buf;
    boost::beast::error_code ec;
    while (true) {
      ws_.read(buf, ec);
      if (ec) return ec == boost::beast::websocket::error::closed;
      buf.consume(buf.size());
    }
  }

 private:
  boost::asio::io_context ioc_;
  boost::asio::ip::tcp::resolver resolver_;
  boost::beast::websocket::stream<boost::asio::ip::tcp::socket> ws_;
  long seq_ = 0;
};

}  // namespace ikk::testing
