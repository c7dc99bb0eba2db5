var Lib = {
  version: "1.0.0",
  util: {
    debounce: function (fn, wait) {
      var t;
      return function () {
        var ctx = this, args = arguments;
        clearTimeout(t);
        t = setTimeout(function () { fn.apply(ctx, args); }, wait);
      };
    },
    throttle(fn, ms) {
      let last = 0;
      return (...args) => {
        const now = Date.now();
        if (now - last >= ms) { last = now; return fn(...args); }
      };
    }
  },
  unusedFeatureA: function () { return "a".repeat(100); },
  unusedFeatureB: function () { return [1, 2, 3].reduce(function (s, v) { return s + v; }, 0); }
};
