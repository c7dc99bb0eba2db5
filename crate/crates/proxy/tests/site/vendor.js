(function (root) {
  "use strict";
  function each(list, fn) {
    for (var i = 0; i < list.length; i++) fn(list[i], i);
  }
  function map(list, fn) {
    var out = [];
    each(list, function (x, i) { out.push(fn(x, i)); });
    return out;
  }
  function debounce(fn, wait) {
    var timer = null;
    return function () {
      var args = arguments, self = this;
      clearTimeout(timer);
      timer = setTimeout(function () { fn.apply(self, args); }, wait);
    };
  }
  function deepClone(value) {
    if (value === null || typeof value !== "object") return value;
    if (Array.isArray(value)) return value.map(deepClone);
    var copy = {};
    Object.keys(value).forEach(function (k) { copy[k] = deepClone(value[k]); });
    return copy;
  }
  function formatCurrency(cents, currency) {
    var sign = cents < 0 ? "-" : "";
    var abs = Math.abs(cents);
    var whole = Math.floor(abs / 100).toString().replace(/\B(?=(\d{3})+(?!\d))/g, ",");
    var frac = String(abs % 100).padStart(2, "0");
    return sign + (currency || "$") + whole + "." + frac;
  }
  function parseQuery(qs) {
    var out = {};
    qs.replace(/^\?/, "").split("&").forEach(function (pair) {
      if (!pair) return;
      var kv = pair.split("=");
      out[decodeURIComponent(kv[0])] = decodeURIComponent(kv[1] || "");
    });
    return out;
  }
  function throttle(fn, wait) {
    var last = 0, pending = null;
    return function () {
      var now = Date.now(), self = this, args = arguments;
      if (now - last >= wait) {
        last = now;
        return fn.apply(self, args);
      }
      clearTimeout(pending);
      pending = setTimeout(function () {
        last = Date.now();
        fn.apply(self, args);
      }, wait - (now - last));
    };
  }
  function groupBy(list, keyFn) {
    var groups = {};
    for (var i = 0; i < list.length; i++) {
      var k = keyFn(list[i]);
      (groups[k] || (groups[k] = [])).push(list[i]);
    }
    return groups;
  }
  function escapeHtml(text) {
    return String(text)
      .replace(/&/g, "&amp;")
      .replace(/</g, "&lt;")
      .replace(/>/g, "&gt;")
      .replace(/"/g, "&quot;")
      .replace(/'/g, "&#39;");
  }
  function retry(task, attempts, delay) {
    return new Promise(function (resolve, reject) {
      function attempt(n) {
        task().then(resolve, function (err) {
          if (n <= 1) return reject(err);
          setTimeout(function () { attempt(n - 1); }, delay);
        });
      }
      attempt(attempts);
    });
  }
  root.util2 = { throttle: throttle, groupBy: groupBy, escapeHtml: escapeHtml, retry: retry };
  root.util = { each: each, map: map, debounce: debounce, deepClone: deepClone, formatCurrency: formatCurrency, parseQuery: parseQuery };
})(typeof window !== "undefined" ? window : globalThis);
