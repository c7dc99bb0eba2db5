document.addEventListener("DOMContentLoaded", function () {
  var buttons = document.querySelectorAll("button");
  buttons.forEach(function (b, i) {
    b.addEventListener("click", () => {
      console.log("clicked", i);
    });
  });
});
window.onload = () => console.log("loaded");
