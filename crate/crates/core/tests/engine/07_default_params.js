function greet(name = "world", punct = name.length > 3 ? "!" : ".") {
  var msg = "hello " + name + punct;
  return msg.toUpperCase();
}
console.log(greet(), greet("al"), greet("alice", "?"));
